"""Pure-numpy kernels with the same interface as the compiled module."""

import numpy as np

from ..smn import standard as std


def loglik_sum(code, nu, gamma, t, a, b):
    """Sum of standard log densities at ``t`` plus log interval masses."""
    lt, lc = loglik_terms(code, nu, gamma, t, a, b)
    return float(np.sum(lt) + np.sum(lc))


def loglik_terms(code, nu, gamma, t, a, b):
    """Per-row contributions: (log f(t_i), log mass(a_j, b_j))."""
    t = np.asarray(t, dtype=float)
    a = np.asarray(a, dtype=float)
    lt = np.asarray(std.log_pdf(code, nu, gamma, t), dtype=float).reshape(t.shape)
    if a.size == 0:
        return lt, np.empty(0)
    lc = np.asarray(std.log_mass(code, nu, gamma, a, b), dtype=float).reshape(a.shape)
    return lt, lc


def estep_exact(code, nu, gamma, t):
    """E(U | T = t) and the CN contaminant probability per row."""
    u, bhat = std.u_hat_exact(code, nu, gamma, np.asarray(t, dtype=float))
    return np.asarray(u, dtype=float), np.asarray(bhat, dtype=float)


def estep_censored(code, nu, gamma, a, b):
    """(log mass, E[U|.], E[UT|.], E[UT^2|.], b_hat) per censored row."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        e = np.empty(0)
        return e, e.copy(), e.copy(), e.copy(), e.copy()
    return tuple(np.asarray(v, dtype=float).reshape(a.shape)
                 for v in std.truncated_moments(code, nu, gamma, a, b))
