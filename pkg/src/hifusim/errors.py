"""Exception types shared across the package.

Every failure mode that callers are expected to catch gets its own class;
anything else is a plain bug and surfaces as a standard exception.
"""


class DomainError(ValueError):
    """Argument outside the mathematically admissible range."""


class AccuracyError(ArithmeticError):
    """A series or quadrature could not reach the requested accuracy.

    Carries ``last_term``, the magnitude of the last computed increment,
    so callers can judge how far off the result is.
    """

    def __init__(self, message, last_term=None):
        super().__init__(message)
        self.last_term = last_term


class ConvergenceError(RuntimeError):
    """An iterative process exhausted its budget.

    Carries ``residual`` (final residual or relative change) and
    ``iterations``.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class DegeneracyError(RuntimeError):
    """A material coefficient left its validity region (q or b ~ 0)."""


class DefinitenessError(RuntimeError):
    """A matrix required to be positive (semi)definite is not."""


class MeshError(RuntimeError):
    """Mesh generation or validation failed (quality, topology, tags)."""


class ParseError(ValueError):
    """Malformed input text.  Carries the 1-based ``line`` number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ValueError):
    """A structurally valid input failed semantic validation.

    Carries ``field``, the offending key, when known.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class ResourceError(RuntimeError):
    """A configured resource limit (memory, history length) was exceeded."""


class ConsistencyError(RuntimeError):
    """Internal invariant violated; indicates a bug, not bad input."""
