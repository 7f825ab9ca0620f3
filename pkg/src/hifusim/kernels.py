"""Memory kernels and fractional-calculus quadrature.

Provides the time-fractional machinery used by the acoustic stepper:

* a small gamma-function implementation (Lanczos approximation) so the
  numerics do not depend on platform libm behaviour,
* the two-parameter Mittag-Leffler function by Taylor series,
* a family of memory kernels (Abel, exponential, Mittag-Leffler, Dirac),
* L1 quadrature weights for the Caputo derivative of order alpha in (0, 1)
  and their application to a sampled history,
* a discrete coercivity probe for the convolution operator.

Conventions: with step tau and t_j = j tau, the Caputo derivative of p at
t_{n+1} is approximated from the time-derivative history by

    D_t^alpha p(t_{n+1}) ~ tau^(1-alpha) * sum_{j=0}^{n+1} zeta_j p_t^{n+1-j}

where, with s = 1 - alpha and zeta0 = 1 / (2 Gamma(2 - alpha)),

    zeta_0     = zeta0
    zeta_j     = ((j+1)^s - (j-1)^s) zeta0       for 1 <= j <= n
    zeta_{n+1} = ((n+1)^s - n^s) zeta0.

The weights telescope: sum_j zeta_j = (n+1)^s / Gamma(2 - alpha).
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import AccuracyError, DomainError

_LANCZOS_G = 7.0
_LANCZOS_C = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

_ML_CUTOFF = 1e-16
_ML_MAX_TERMS = 500


def _lanczos_acc(z):
    acc = _LANCZOS_C[0]
    for i in range(1, 9):
        acc += _LANCZOS_C[i] / (z + i)
    return acc


def gamma_fn(x):
    """Gamma function for real x > 0 (Lanczos, g = 7, 9 coefficients)."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"gamma_fn requires x > 0, got {x}")
    if x < 0.5:
        return gamma_fn(x + 1.0) / x
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) \
        * _lanczos_acc(z)


def lgamma_fn(x):
    """log Gamma(x) for real x > 0; stable for large arguments."""
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"lgamma_fn requires x > 0, got {x}")
    if x < 0.5:
        return lgamma_fn(x + 1.0) - math.log(x)
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return _LN_SQRT_2PI + (z + 0.5) * math.log(t) - t \
        + math.log(_lanczos_acc(z))


def _is_pole(y):
    return y < 0.5 and abs(y - round(y)) < 1e-12 and round(y) <= 0.0


def _rgamma(y):
    """1 / Gamma(y) for any real y; zero at the poles."""
    if _is_pole(y):
        return 0.0
    if y >= 0.5:
        return math.exp(-lgamma_fn(y))
    # reflection: 1 / Gamma(y) = sin(pi y) Gamma(1 - y) / pi
    return math.sin(math.pi * y) / math.pi * math.exp(lgamma_fn(1.0 - y))


def _log_rgamma(y):
    """(log |1/Gamma(y)|, sign); sign 0 marks a pole."""
    if _is_pole(y):
        return -math.inf, 0.0
    if y >= 0.5:
        return -lgamma_fn(y), 1.0
    s = math.sin(math.pi * y)
    return math.log(abs(s)) - math.log(math.pi) + lgamma_fn(1.0 - y), \
        math.copysign(1.0, s)


def mittag_leffler(a, b, z):
    """Two-parameter Mittag-Leffler function E_{a,b}(z) by Taylor series.

    Terms are accumulated in log space so Gamma(a k + b) never overflows.
    The series stops once a term drops below 1e-16 of the largest partial
    sum seen so far (which bounds the accuracy attainable in the presence
    of cancellation); exceeding 500 terms raises AccuracyError carrying
    the magnitude of the last term.  Intended for moderate |z|; for large
    negative arguments the cancellation makes the result meaningless and
    the caller should rescale.
    """
    a = float(a)
    b = float(b)
    z = float(z)
    if not (a > 0.0) or not math.isfinite(a):
        raise DomainError(f"mittag_leffler requires a > 0, got {a}")
    if not (math.isfinite(b) and math.isfinite(z)):
        raise DomainError("mittag_leffler requires finite b and z")
    total = _rgamma(b)
    if z == 0.0:
        return total
    scale = max(abs(total), 1e-300)
    lz = math.log(abs(z))
    sgnz = math.copysign(1.0, z)
    term = math.inf
    for k in range(1, _ML_MAX_TERMS + 1):
        lr, sgn = _log_rgamma(a * k + b)
        if sgn == 0.0:
            term = 0.0
        else:
            lt = k * lz + lr
            if lt > 700.0:
                raise AccuracyError(
                    f"mittag_leffler term overflow at k={k} for "
                    f"E_{{{a},{b}}}({z})", last_term=math.inf)
            if sgnz < 0.0 and k % 2 == 1:
                sgn = -sgn
            term = sgn * math.exp(lt)
        total += term
        scale = max(scale, abs(total))
        if abs(term) <= _ML_CUTOFF * scale:
            return total
    raise AccuracyError(
        f"mittag_leffler did not converge in {_ML_MAX_TERMS} terms for "
        f"E_{{{a},{b}}}({z})", last_term=abs(term))


@dataclass(frozen=True)
class MemoryKernel:
    """Damping kernel appearing under the time convolution.

    Kinds: ``abel`` (power law t^-alpha / Gamma(1-alpha)), ``exponential``
    (exp(-t/tau)/tau), ``mittag_leffler``, and ``dirac`` (formal identity
    kernel; no pointwise values, convolution acts as the identity).
    """

    kind: str
    alpha: float = math.nan
    tau: float = math.nan
    a: float = math.nan
    b: float = math.nan

    @staticmethod
    def abel(alpha):
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"abel kernel requires 0 < alpha < 1, "
                              f"got {alpha}")
        return MemoryKernel("abel", alpha=alpha)

    @staticmethod
    def exponential(tau):
        tau = float(tau)
        if not tau > 0.0:
            raise DomainError(f"exponential kernel requires tau > 0, "
                              f"got {tau}")
        return MemoryKernel("exponential", tau=tau)

    @staticmethod
    def mittag_leffler(a, b, tau):
        a, b, tau = float(a), float(b), float(tau)
        if not a > 0.0:
            raise DomainError(f"mittag_leffler kernel requires a > 0, "
                              f"got {a}")
        if not tau > 0.0:
            raise DomainError(f"mittag_leffler kernel requires tau > 0, "
                              f"got {tau}")
        return MemoryKernel("mittag_leffler", tau=tau, a=a, b=b)

    @staticmethod
    def dirac():
        return MemoryKernel("dirac")

    def evaluate(self, t):
        """Pointwise kernel value at t > 0."""
        t = float(t)
        if self.kind == "dirac":
            raise DomainError("dirac kernel has no pointwise values")
        if not t > 0.0:
            raise DomainError(f"kernel evaluation requires t > 0, got {t}")
        if self.kind == "abel":
            return t ** (-self.alpha) / gamma_fn(1.0 - self.alpha)
        if self.kind == "exponential":
            return math.exp(-t / self.tau) / self.tau
        if self.kind == "mittag_leffler":
            arg = -((t / self.tau) ** self.a)
            return self.tau ** (-self.a) * t ** (self.b - 1.0) \
                * mittag_leffler(self.a, self.b, arg)
        raise DomainError(f"unknown kernel kind {self.kind!r}")


@dataclass(frozen=True)
class L1Weights:
    """L1 quadrature weights zeta_j^{n+1}, j = 0..n+1, for one time level."""

    alpha: float
    n: int
    weights: np.ndarray

    def total(self):
        return float(np.sum(self.weights))


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"fractional order must satisfy 0 < alpha < 1, "
                          f"got {alpha}")
    return alpha


class L1WeightCache:
    """Incremental L1 weights for a time-stepping loop.

    Stores k^(1-alpha) and the step-independent interior weights so that
    advancing from step n to n+1 costs O(1) new terms.
    """

    def __init__(self, alpha):
        self.alpha = _check_alpha(alpha)
        self.zeta0 = 0.5 / gamma_fn(2.0 - self.alpha)
        self._powers = np.array([0.0, 1.0])

    def _grow(self, n):
        have = self._powers.shape[0] - 1
        if n + 1 > have:
            ks = np.arange(have + 1, n + 2, dtype=np.float64)
            self._powers = np.concatenate(
                [self._powers, ks ** (1.0 - self.alpha)])

    def powers(self, n):
        """Array k^(1-alpha) for k = 0..n+1."""
        self._grow(n)
        return self._powers[:n + 2]

    def interior(self, n):
        """zeta_j for j = 1..n (empty for n = 0)."""
        p = self.powers(n)
        return (p[2:n + 2] - p[0:n]) * self.zeta0

    def last(self, n):
        """zeta_{n+1}^{n+1}."""
        p = self.powers(n)
        return (p[n + 1] - p[n]) * self.zeta0

    def weights(self, n):
        """Full weight vector zeta_j^{n+1}, j = 0..n+1 (length n+2)."""
        if n < 0:
            raise DomainError(f"l1 weights require n >= 0, got {n}")
        return np.concatenate(
            [[self.zeta0], self.interior(n), [self.last(n)]])


def l1_weights(alpha, n):
    """L1 weights for the Caputo derivative at time level n+1."""
    n = int(n)
    cache = L1WeightCache(alpha)
    return L1Weights(alpha=cache.alpha, n=n, weights=cache.weights(n))


def caputo_l1_apply(history, alpha, tau):
    """Evaluate the L1 Caputo derivative at the last history point.

    ``history`` holds the time-derivative samples p_t(t_0) .. p_t(t_{n+1})
    (length n+2 >= 2) on the uniform grid with step ``tau``; the return
    value approximates D_t^alpha p at t_{n+1}.
    """
    alpha = _check_alpha(alpha)
    tau = float(tau)
    if not tau > 0.0:
        raise DomainError(f"caputo_l1_apply requires tau > 0, got {tau}")
    hist = np.asarray(history, dtype=np.float64)
    if hist.ndim != 1 or hist.shape[0] < 2:
        raise DomainError("history must be a 1-d array of at least two "
                          "samples (t_0 and t_1)")
    n = hist.shape[0] - 2
    w = l1_weights(alpha, n).weights
    return tau ** (1.0 - alpha) * float(np.dot(w, hist[::-1]))


def coercivity_probe(kernel, signal, tau):
    """Discrete check of the convolution operator's sign.

    For y sampled at t_i = i tau the causal convolution is approximated
    with trapezoidal averaging of y and midpoint sampling of the kernel
    (which keeps the Abel singularity off the grid):

        (K * y)(t_i) ~ tau sum_{j<i} K((i - j - 1/2) tau) (y_j + y_{j+1})/2.

    Returns the pair (lhs, rhs) with lhs ~ int (K*y) y dt and
    rhs ~ int (K*y)^2 dt, both by trapezoidal quadrature; a coercive
    kernel satisfies lhs >= C rhs with some C >= 0 (reported with C = 1).
    """
    tau = float(tau)
    if not tau > 0.0:
        raise DomainError(f"coercivity_probe requires tau > 0, got {tau}")
    y = np.asarray(signal, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < 2:
        raise DomainError("signal must be a 1-d array of at least two "
                          "samples")
    npts = y.shape[0]
    if kernel.kind == "dirac":
        conv = y.copy()
    else:
        lags = (np.arange(npts - 1) + 0.5) * tau
        kv = np.array([kernel.evaluate(t) for t in lags])
        yavg = 0.5 * (y[:-1] + y[1:])
        conv = np.zeros(npts)
        conv[1:] = tau * np.convolve(kv, yavg)[:npts - 1]
    wt = np.full(npts, tau)
    wt[0] = wt[-1] = 0.5 * tau
    lhs = float(np.dot(wt, conv * y))
    rhs = float(np.dot(wt, conv * conv))
    return lhs, rhs
