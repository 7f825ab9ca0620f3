"""Backend selection for the numeric hot loops.

Two interchangeable implementations exist: ``_impl_numba`` (JIT-compiled)
and ``_impl_numpy`` (vectorized reference).  The choice is made once at
import time from the ``HIFU_BACKEND`` environment variable:

* unset or ``"numba"``: use the JIT path when numba imports cleanly,
  otherwise fall back to NumPy (``"numba"`` set explicitly fails loudly
  instead of falling back);
* ``"numpy"``: force the reference path.

``HIFU_THREADS`` caps the numba threading layer.  All kernels are written
as sequential loops regardless, so results do not depend on the thread
count.
"""
import os

from .errors import ValidationError

_requested = os.environ.get("HIFU_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ValidationError(
        f"HIFU_BACKEND must be 'numba' or 'numpy', got {_requested!r}",
        field="HIFU_BACKEND")

if _requested == "numpy":
    from . import _impl_numpy as _impl
else:
    try:
        import numba as _numba
        _threads = os.environ.get("HIFU_THREADS", "").strip()
        if _threads:
            try:
                _n = int(_threads)
            except ValueError:
                raise ValidationError(
                    f"HIFU_THREADS must be an integer, got {_threads!r}",
                    field="HIFU_THREADS") from None
            # requests beyond the launch-time pool clamp instead of failing
            _numba.set_num_threads(
                min(max(1, _n), _numba.config.NUMBA_NUM_THREADS))
        from . import _impl_numba as _impl
    except ImportError:
        if _requested == "numba":
            raise
        from . import _impl_numpy as _impl

USING_NUMBA = _impl.USING_NUMBA

csr_matvec = _impl.csr_matvec
mass_fill = _impl.mass_fill
stiffness_fill = _impl.stiffness_fill
convection_fill = _impl.convection_fill
history_comb = _impl.history_comb
volterra_mode = _impl.volterra_mode


def backend_name():
    return "numba" if USING_NUMBA else "numpy"
