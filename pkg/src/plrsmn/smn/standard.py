"""Vectorised closed forms for the standard SMN families (mu=0, sigma=1).

Families are addressed by integer code (0=N, 1=T, 2=SL, 3=CN) with scalar
mixing parameters ``nu`` and ``gamma`` so these functions can back both the
public API and the numpy kernel. Everything is computed in log space and
interval probabilities are reflected into the lower half-line, so tail
intervals keep their relative accuracy.

With U the mixing variable,

    E_phi(r, h) = E[U^r phi(h sqrt(U))],   E_Phi(r, h) = E[U^r Phi(h sqrt(U))].
"""

import numpy as np
from scipy import special as sc

from .special import LOG_SQRT_2PI, log_diff_exp, log_scaled_lower_gamma, log_student_cdf

N, T, SL, CN = 0, 1, 2, 3


class QuadratureRequired(ValueError):
    """The closed form is undefined for this (family, r) combination."""


def check_regime(code, nu, r):
    if code == T and nu + 2.0 * r <= 0:
        raise QuadratureRequired(f"T closed form needs nu + 2r > 0 (nu={nu}, r={r})")
    if code == SL and nu + r <= 0:
        raise QuadratureRequired(f"SL closed form needs nu + r > 0 (nu={nu}, r={r})")


def log_moment(code, nu, gamma, r):
    """log E[U^r]."""
    if code == N:
        return 0.0
    if code == T:
        return sc.gammaln(nu / 2 + r) - sc.gammaln(nu / 2) + r * np.log(2.0 / nu)
    if code == SL:
        return np.log(nu / (nu + r))
    return float(np.logaddexp(r * np.log(gamma) + np.log(nu), np.log1p(-nu)))


def log_e_phi(code, nu, gamma, r, h):
    """log E_phi(r, h)."""
    check_regime(code, nu, r)
    h = np.asarray(h, dtype=float)
    with np.errstate(over="ignore"):
        h2 = h * h
    if code == N:
        return -0.5 * h2 - LOG_SQRT_2PI
    if code == T:
        c = sc.gammaln(nu / 2 + r) - sc.gammaln(nu / 2) - LOG_SQRT_2PI + (nu / 2) * np.log(nu / 2)
        return c + (nu / 2 + r) * (np.log(2.0) - np.log(h2 + nu))
    if code == SL:
        return np.log(nu) - LOG_SQRT_2PI + log_scaled_lower_gamma(nu + r, 0.5 * h2)
    with np.errstate(invalid="ignore"):
        out = np.logaddexp(r * np.log(gamma) + np.log(nu) - 0.5 * gamma * h2, np.log1p(-nu) - 0.5 * h2)
    return np.where(np.isinf(h), -np.inf, out) - LOG_SQRT_2PI


def log_pdf(code, nu, gamma, t):
    """Standard SMN log density; f(t) = E_phi(1/2, t)."""
    return log_e_phi(code, nu, gamma, 0.5, t)


def _log_cdf_slash(nu, h):
    h = np.asarray(h, dtype=float)
    hn = -np.abs(h)
    logf = np.log(nu) - LOG_SQRT_2PI + log_scaled_lower_gamma(nu + 0.5, 0.5 * hn * hn)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(np.isfinite(hn) & (hn < 0), np.log(-hn) + logf - np.log(2.0 * nu), -np.inf)
    # F(h) = Phi(h) - h f(h) / (2 nu); both terms positive for h <= 0
    lower = np.logaddexp(sc.log_ndtr(hn), tail)
    with np.errstate(divide="ignore"):
        upper = np.log1p(-np.exp(lower))
    return np.where(h <= 0, lower, upper)


def log_cdf(code, nu, gamma, h):
    h = np.asarray(h, dtype=float)
    if code == N:
        return sc.log_ndtr(h)
    if code == T:
        return log_student_cdf(nu, h)
    if code == SL:
        return _log_cdf_slash(nu, h)
    sg = np.sqrt(gamma)
    with np.errstate(invalid="ignore"):
        return np.logaddexp(np.log(nu) + sc.log_ndtr(h * sg), np.log1p(-nu) + sc.log_ndtr(h))


def reflect(a, b):
    """Map (a, b) to (-b, -a) where that moves the interval's centre to the
    non-positive side; cdf differences are unchanged by the symmetry."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        flip = (a + b) > 0
    return np.where(flip, -b, a), np.where(flip, -a, b), flip


def _log_normal_diff(a, b):
    """log(Phi(b) - Phi(a)) for already reflected intervals."""
    return log_diff_exp(sc.log_ndtr(b), sc.log_ndtr(a))


def log_phi_diff(code, nu, gamma, r, a, b):
    """log(E_Phi(r, b) - E_Phi(r, a)); r = 0 gives the interval mass."""
    check_regime(code, nu, r)
    a, b, _ = reflect(a, b)
    if code == N:
        return _log_normal_diff(a, b)
    if code == T:
        df = nu + 2.0 * r
        s = np.sqrt(df / nu)
        return log_moment(code, nu, gamma, r) + log_diff_exp(log_student_cdf(df, b * s), log_student_cdf(df, a * s))
    if code == SL:
        return np.log(nu / (nu + r)) + log_diff_exp(_log_cdf_slash(nu + r, b), _log_cdf_slash(nu + r, a))
    sg = np.sqrt(gamma)
    with np.errstate(invalid="ignore"):
        return np.logaddexp(r * np.log(gamma) + np.log(nu) + _log_normal_diff(a * sg, b * sg),
                            np.log1p(-nu) + _log_normal_diff(a, b))


def log_mass(code, nu, gamma, a, b):
    return log_phi_diff(code, nu, gamma, 0.0, a, b)


def e_phi(code, nu, gamma, r, h):
    return np.exp(log_e_phi(code, nu, gamma, r, h))


def e_Phi(code, nu, gamma, r, h):
    """E_Phi(r, h), via the lower tail for h <= 0 and the complement
    E[U^r] - E_Phi(r, -h) above."""
    h = np.asarray(h, dtype=float)
    hn = -np.abs(h)
    low = np.exp(log_phi_diff(code, nu, gamma, r, np.full(hn.shape, -np.inf), hn))
    moment = np.exp(log_moment(code, nu, gamma, r))
    return np.where(h <= 0, low, moment - low)


def _ratio(log_num, log_den):
    with np.errstate(invalid="ignore"):
        return np.where(np.isneginf(log_num), 0.0, np.exp(log_num - log_den))


def _times(h, v):
    """h * v with the convention inf * 0 = 0 (vanishing tail terms)."""
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(h), h * v, 0.0)


def truncated_moments(code, nu, gamma, a, b):
    """Moments of (U, T) given a < T < b for the standard family.

    Returns (log_mass, E[U|.], E[UT|.], E[UT^2|.], b_hat) where ``b_hat`` is
    the contaminant-component probability for CN and zero otherwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lm = log_mass(code, nu, gamma, a, b)
    eu = _ratio(log_phi_diff(code, nu, gamma, 1.0, a, b), lm)
    ra = _ratio(log_e_phi(code, nu, gamma, 0.5, a), lm)
    rb = _ratio(log_e_phi(code, nu, gamma, 0.5, b), lm)
    eut = ra - rb
    eut2 = 1.0 + _times(a, ra) - _times(b, rb)
    if code == CN:
        aa, bb, _ = reflect(a, b)
        sg = np.sqrt(gamma)
        bhat = _ratio(np.log(nu) + _log_normal_diff(aa * sg, bb * sg), lm)
    else:
        bhat = np.zeros(np.shape(lm))
    return lm, eu, eut, eut2, bhat


def truncated_mean(code, nu, gamma, a, b):
    """E[T | a < T < b] = (E_phi(-1/2, a) - E_phi(-1/2, b)) / mass."""
    lm = log_mass(code, nu, gamma, a, b)
    return _ratio(log_e_phi(code, nu, gamma, -0.5, a), lm) - _ratio(log_e_phi(code, nu, gamma, -0.5, b), lm)


def u_hat_exact(code, nu, gamma, t):
    """E[U | T = t] together with the CN contaminant probability."""
    t = np.asarray(t, dtype=float)
    d = t * t
    if code == N:
        return np.ones(t.shape), np.zeros(t.shape)
    if code == T:
        return (nu + 1.0) / (nu + d), np.zeros(t.shape)
    if code == SL:
        x = 0.5 * d
        return np.exp(log_scaled_lower_gamma(nu + 1.5, x) - log_scaled_lower_gamma(nu + 0.5, x)), np.zeros(t.shape)
    logit = np.log(nu) + 0.5 * np.log(gamma) + 0.5 * (1.0 - gamma) * d - np.log1p(-nu)
    bhat = sc.expit(logit)
    return 1.0 - bhat * (1.0 - gamma), bhat
