"""Special-function helpers built on :mod:`scipy.special`."""

import numpy as np
from scipy import special as sc

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)

_SERIES_MAX_TERMS = 5000


def log_scaled_lower_gamma(a, x):
    """log(x**-a * gamma_lower(a, x)) for a > 0, x >= 0.

    The scaled function tends to 1/a as x -> 0, which is where the plain
    ``gammainc`` route underflows; there the power series
    exp(-x) * sum_k x^k / (a (a+1) ... (a+k)) is used instead.
    """
    a, x = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(x, dtype=float))
    out = np.empty(a.shape)
    small = x < a + 1.0
    if np.any(small):
        aa, xx = a[small], x[small]
        term = 1.0 / aa
        total = term.copy()
        active = np.ones(aa.shape, dtype=bool)
        k = 0
        while active.any() and k < _SERIES_MAX_TERMS:
            k += 1
            term = np.where(active, term * xx / (aa + k), term)
            total = np.where(active, total + term, total)
            active &= term > total * 1e-17
        out[small] = np.log(total) - xx
    big = ~small
    if np.any(big):
        aa, xx = a[big], x[big]
        with np.errstate(divide="ignore", invalid="ignore"):
            val = sc.gammaln(aa) + np.log(sc.gammainc(aa, xx)) - aa * np.log(xx)
        out[big] = np.where(np.isinf(xx), -np.inf, val)
    return out if out.ndim else float(out)


def log_diff_exp(lb, la):
    """log(exp(lb) - exp(la)) for la <= lb; -inf when the difference vanishes."""
    lb = np.asarray(lb, dtype=float)
    la = np.asarray(la, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(np.isneginf(la), -np.inf, la - lb)
        out = lb + np.log1p(-np.exp(d))
    return np.where(la >= lb, -np.inf, out)


def log_student_cdf(df, h):
    """log of the Student-t cdf, taking the complement in the upper tail."""
    h = np.asarray(h, dtype=float)
    with np.errstate(divide="ignore"):
        lower = np.log(sc.stdtr(df, np.minimum(h, 0.0)))
        upper = np.log1p(-sc.stdtr(df, -np.maximum(h, 0.0)))
    return np.where(h <= 0, lower, upper)
