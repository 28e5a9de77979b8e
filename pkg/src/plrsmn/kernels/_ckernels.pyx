# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-observation kernels: observed-data log-likelihood and E-step
moments. Mirrors plrsmn.kernels._pykernels operation for operation."""

import numpy as np

from libc.math cimport exp, fabs, log, log1p, sqrt, INFINITY, isinf
from scipy.special.cython_special cimport gammainc, gammaln, log_ndtr, stdtr

DEF N = 0
DEF T = 1
DEF SL = 2
DEF CN = 3

cdef double LOG_SQRT_2PI = 0.91893853320467274178
cdef double NEG_INF = -INFINITY


cdef inline double _logaddexp(double x, double y) nogil:
    if x == NEG_INF:
        return y
    if y == NEG_INF:
        return x
    if x > y:
        return x + log1p(exp(y - x))
    return y + log1p(exp(x - y))


cdef inline double _log_diff_exp(double lb, double la) nogil:
    if la >= lb:
        return NEG_INF
    if la == NEG_INF:
        return lb
    return lb + log1p(-exp(la - lb))


cdef inline double _lndtr(double x) nogil:
    return log_ndtr(x)


cdef double _log_scaled_lower_gamma(double a, double x) nogil:
    cdef double term, total
    cdef int k
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        k = 0
        while k < 5000:
            k += 1
            term = term * x / (a + k)
            total = total + term
            if not (term > total * 1e-17):
                break
        return log(total) - x
    if isinf(x):
        return NEG_INF
    return gammaln(a) + log(gammainc(a, x)) - a * log(x)


cdef inline double _log_student_cdf(double df, double h) nogil:
    if h <= 0:
        return log(stdtr(df, h))
    return log1p(-stdtr(df, -h))


cdef double _log_cdf_slash(double nu, double h) nogil:
    cdef double hn = -fabs(h)
    cdef double logf, tail, lower
    logf = log(nu) - LOG_SQRT_2PI + _log_scaled_lower_gamma(nu + 0.5, 0.5 * hn * hn)
    if hn < 0 and not isinf(hn):
        tail = log(-hn) + logf - log(2.0 * nu)
    else:
        tail = NEG_INF
    lower = _logaddexp(_lndtr(hn), tail)
    if h <= 0:
        return lower
    return log1p(-exp(lower))


cdef inline double _log_normal_diff(double a, double b) nogil:
    return _log_diff_exp(_lndtr(b), _lndtr(a))


cdef struct Params:
    int code
    double nu
    double gamma
    double log_nu
    double log1m_nu
    double log_gamma
    double sqrt_gamma
    double t_const   # T: log E_phi constant for r = 1/2


cdef Params _params(int code, double nu, double gamma):
    cdef Params p
    p.code = code
    p.nu = nu
    p.gamma = gamma
    p.log_nu = log(nu) if nu > 0 else NEG_INF
    p.log1m_nu = log1p(-nu) if nu < 1 else NEG_INF
    p.log_gamma = log(gamma) if gamma > 0 else NEG_INF
    p.sqrt_gamma = sqrt(gamma)
    if code == T:
        p.t_const = gammaln(nu / 2 + 0.5) - gammaln(nu / 2) - LOG_SQRT_2PI + (nu / 2) * log(nu / 2)
    else:
        p.t_const = 0.0
    return p


cdef double _log_e_phi_half(Params* p, double h) nogil:
    """log E_phi(1/2, h), i.e. the standard log density."""
    cdef double h2 = h * h
    cdef double v
    if p.code == N:
        return -0.5 * h2 - LOG_SQRT_2PI
    if p.code == T:
        return p.t_const + (p.nu / 2 + 0.5) * (log(2.0) - log(h2 + p.nu))
    if p.code == SL:
        return p.log_nu - LOG_SQRT_2PI + _log_scaled_lower_gamma(p.nu + 0.5, 0.5 * h2)
    if isinf(h):
        return NEG_INF
    v = _logaddexp(0.5 * p.log_gamma + p.log_nu - 0.5 * p.gamma * h2, p.log1m_nu - 0.5 * h2)
    return v - LOG_SQRT_2PI


cdef double _log_phi_diff(Params* p, double r, double a, double b) nogil:
    """log(E_Phi(r, b) - E_Phi(r, a))."""
    cdef double tmp, df, s, lm
    if a + b > 0:
        tmp = a
        a = -b
        b = -tmp
    if p.code == N:
        return _log_normal_diff(a, b)
    if p.code == T:
        df = p.nu + 2.0 * r
        s = sqrt(df / p.nu)
        lm = gammaln(p.nu / 2 + r) - gammaln(p.nu / 2) + r * log(2.0 / p.nu)
        return lm + _log_diff_exp(_log_student_cdf(df, b * s), _log_student_cdf(df, a * s))
    if p.code == SL:
        return log(p.nu / (p.nu + r)) + _log_diff_exp(_log_cdf_slash(p.nu + r, b), _log_cdf_slash(p.nu + r, a))
    return _logaddexp(r * p.log_gamma + p.log_nu + _log_normal_diff(a * p.sqrt_gamma, b * p.sqrt_gamma),
                      p.log1m_nu + _log_normal_diff(a, b))


cdef inline double _ratio(double log_num, double log_den) nogil:
    if log_num == NEG_INF:
        return 0.0
    return exp(log_num - log_den)


cdef inline double _times(double h, double v) nogil:
    if isinf(h):
        return 0.0
    return h * v


def loglik_sum(int code, double nu, double gamma, const double[::1] t, const double[::1] a, const double[::1] b):
    """Sum of standard log densities at ``t`` plus log interval masses."""
    cdef Params p = _params(code, nu, gamma)
    cdef Py_ssize_t i
    cdef double total = 0.0
    with nogil:
        for i in range(t.shape[0]):
            total += _log_e_phi_half(&p, t[i])
        for i in range(a.shape[0]):
            total += _log_phi_diff(&p, 0.0, a[i], b[i])
    return total


def loglik_terms(int code, double nu, double gamma, const double[::1] t, const double[::1] a, const double[::1] b):
    """Per-row contributions: (log f(t_i), log mass(a_j, b_j))."""
    cdef Params p = _params(code, nu, gamma)
    cdef Py_ssize_t i
    out_t = np.empty(t.shape[0])
    out_c = np.empty(a.shape[0])
    cdef double[::1] ot = out_t
    cdef double[::1] oc = out_c
    with nogil:
        for i in range(t.shape[0]):
            ot[i] = _log_e_phi_half(&p, t[i])
        for i in range(a.shape[0]):
            oc[i] = _log_phi_diff(&p, 0.0, a[i], b[i])
    return out_t, out_c


def estep_exact(int code, double nu, double gamma, const double[::1] t):
    """E(U | T = t) and the CN contaminant probability per row."""
    cdef Py_ssize_t i, n = t.shape[0]
    cdef Params p = _params(code, nu, gamma)
    out_u = np.empty(n)
    out_b = np.zeros(n)
    cdef double[::1] u = out_u
    cdef double[::1] bh = out_b
    cdef double d, x, logit
    with nogil:
        for i in range(n):
            d = t[i] * t[i]
            if code == N:
                u[i] = 1.0
            elif code == T:
                u[i] = (nu + 1.0) / (nu + d)
            elif code == SL:
                x = 0.5 * d
                u[i] = exp(_log_scaled_lower_gamma(nu + 1.5, x) - _log_scaled_lower_gamma(nu + 0.5, x))
            else:
                logit = p.log_nu + 0.5 * p.log_gamma + 0.5 * (1.0 - gamma) * d - p.log1m_nu
                if logit >= 0:
                    bh[i] = 1.0 / (1.0 + exp(-logit))
                else:
                    bh[i] = exp(logit) / (1.0 + exp(logit))
                u[i] = 1.0 - bh[i] * (1.0 - gamma)
    return out_u, out_b


def estep_censored(int code, double nu, double gamma, const double[::1] a, const double[::1] b):
    """(log mass, E[U|.], E[UT|.], E[UT^2|.], b_hat) per censored row."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef Params p = _params(code, nu, gamma)
    res = np.zeros((5, n))
    cdef double[:, ::1] o = res
    cdef double lm, ra, rb, aa, bb, tmp
    with nogil:
        for i in range(n):
            lm = _log_phi_diff(&p, 0.0, a[i], b[i])
            o[0, i] = lm
            o[1, i] = _ratio(_log_phi_diff(&p, 1.0, a[i], b[i]), lm)
            ra = _ratio(_log_e_phi_half(&p, a[i]), lm)
            rb = _ratio(_log_e_phi_half(&p, b[i]), lm)
            o[2, i] = ra - rb
            o[3, i] = 1.0 + _times(a[i], ra) - _times(b[i], rb)
            if code == CN:
                aa = a[i]
                bb = b[i]
                if aa + bb > 0:
                    tmp = aa
                    aa = -bb
                    bb = -tmp
                o[4, i] = _ratio(p.log_nu + _log_normal_diff(aa * p.sqrt_gamma, bb * p.sqrt_gamma), lm)
    return res[0], res[1], res[2], res[3], res[4]
