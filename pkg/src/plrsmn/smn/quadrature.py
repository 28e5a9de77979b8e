"""Adaptive-quadrature fallbacks for regimes without a closed form."""

import math

from scipy import integrate

from . import standard as std

EPSREL = 1e-9


def _mean_exists(code, nu):
    return not ((code == std.T and nu <= 1.0) or (code == std.SL and nu <= 0.5))


def truncated_mean_quad(code, nu, gamma, a, b):
    """E[T | a < T < b] by integrating t f(t) over the interval.

    Needed for the heavy-tailed regimes (T with nu <= 1, SL with nu <= 1/2)
    where the individual E_phi(-1/2, .) terms diverge. An infinite endpoint in
    such a regime gives +-inf: the conditional mean does not exist.
    """
    if not _mean_exists(code, nu):
        if math.isinf(b):
            return math.inf
        if math.isinf(a):
            return -math.inf
    lm = float(std.log_mass(code, nu, gamma, a, b))
    if not math.isfinite(lm):
        return math.nan

    def integrand(t):
        return t * math.exp(float(std.log_pdf(code, nu, gamma, t)) - lm)

    pieces = [(a, 0.0), (0.0, b)] if a < 0 < b else [(a, b)]
    total = 0.0
    for lo, hi in pieces:
        val, _ = integrate.quad(integrand, lo, hi, epsrel=EPSREL, epsabs=0.0, limit=200)
        total += val
    return total
