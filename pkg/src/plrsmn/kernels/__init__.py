"""Per-observation likelihood and E-step kernels.

The compiled extension is used when it imports; setting the environment
variable ``PLRSMN_PURE_PYTHON=1`` forces the numpy implementation. All
functions take contiguous float64 arrays of standardized residuals (exact
rows) or standardized interval endpoints (censored rows).
"""

import os

from . import _pykernels

__all__ = ["BACKEND", "get_backend", "loglik_sum", "loglik_terms", "estep_exact", "estep_censored"]


def _compiled():
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


def get_backend(name: str):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name == "python":
        return _pykernels
    if name == "cython":
        mod = _compiled()
        if mod is None:
            raise ImportError("compiled kernels are not built")
        return mod
    raise ValueError(f"unknown backend {name!r}")


_impl = None
if os.environ.get("PLRSMN_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    _impl = _compiled()
BACKEND = "python" if _impl is None else "cython"
if _impl is None:
    _impl = _pykernels

loglik_sum = _impl.loglik_sum
loglik_terms = _impl.loglik_terms
estep_exact = _impl.estep_exact
estep_censored = _impl.estep_censored
