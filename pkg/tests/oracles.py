"""Reference computations that do not go through the package's closed forms.

Every function here integrates over the mixing variable U directly, so the
oracles disagree with the library exactly when a closed form is wrong.
"""

import math

import numpy as np
from scipy import integrate, stats
from scipy.interpolate import BSpline
from scipy.special import ndtr

EPS = 1e-12
SQRT_2PI = math.sqrt(2.0 * math.pi)


# -- mixing laws ------------------------------------------------------------------

def _mixture_integral(family, nu, gamma, g, eps=EPS):
    """E[g(U)] for the family's mixing law, by adaptive quadrature.

    T and SL integrate over w = log U, which removes the power singularity of
    the mixing density at zero. The w-range stops where the weight falls
    below double precision; callers keep the effective power of U at zero
    (nu/2 + r for T) at 0.05 or more so the cut-off tail stays negligible.
    """
    if family == "N":
        return g(1.0)
    if family == "CN":
        return nu * g(gamma) + (1.0 - nu) * g(1.0)
    if family == "T":
        k = nu / 2.0
        logc = k * math.log(k) - math.lgamma(k)

        def f(w):
            u = math.exp(w)
            return g(u) * math.exp(logc + k * w - k * u)

        top = math.log(800.0 / k)  # exp(-k u) underflows beyond this
        cuts = [-700.0, -100.0, -30.0, -8.0, -2.0, 1.0, 3.0]
        cuts = [c for c in cuts if c < top] + [top]
    elif family == "SL":
        def f(w):
            return g(math.exp(w)) * nu * math.exp(nu * w)

        cuts = [-700.0, -100.0, -30.0, -8.0, -2.0, 0.0]
    else:
        raise ValueError(family)
    pieces = list(zip(cuts[:-1], cuts[1:]))
    # a rough pass fixes the absolute scale, so pieces where the integrand is
    # negligible do not chase relative precision on nothing
    rough = sum(integrate.quad(f, lo, hi, epsrel=1e-6, limit=200)[0] for lo, hi in pieces)
    tol = eps * abs(rough) * 1e-2
    return math.fsum(integrate.quad(f, lo, hi, epsabs=tol, epsrel=eps, limit=400)[0] for lo, hi in pieces)


# -- E_phi / E_Phi ------------------------------------------------------------------

def _npdf(x):
    return math.exp(-0.5 * x * x) / SQRT_2PI


def e_phi(family, nu, gamma, r, h):
    return _mixture_integral(family, nu, gamma, lambda u: u ** r * _npdf(h * math.sqrt(u)))


def e_Phi(family, nu, gamma, r, h):
    return _mixture_integral(family, nu, gamma, lambda u: u ** r * ndtr(h * math.sqrt(u)))


# -- censored moments by nested quadrature ------------------------------------------

def _inner(u, mu, sigma, c1, c2, power, eps=EPS):
    """Integral over y in (c1, c2) of y^power times the N(mu, sigma^2/u) density."""
    s = sigma / math.sqrt(u)
    lo = max(c1, mu - 40 * s)
    hi = min(c2, mu + 40 * s)
    if not lo < hi:
        return 0.0
    pts = [p for p in (mu - 3 * s, mu, mu + 3 * s) if lo < p < hi]
    scale = max(abs(mu), s) ** power / s * 1e-16
    v, _ = integrate.quad(lambda y: y ** power * _npdf((y - mu) / s) / s, lo, hi, points=pts or None,
                          epsabs=scale, epsrel=eps, limit=400)
    return v


def censored_moments(family, nu, gamma, mu, sigma, c1, c2, eps=1e-10):
    """(E[U|.], E[UY|.], E[UY^2|.], mass) with both U and Y integrated
    numerically (nested adaptive quadrature)."""

    def nested(power, upow):
        return _mixture_integral(family, nu, gamma,
                                 lambda u: u ** upow * _inner(u, mu, sigma, c1, c2, power, eps), eps)

    mass = nested(0, 0)
    return nested(0, 1) / mass, nested(1, 1) / mass, nested(2, 1) / mass, mass


def censored_moments_fast(family, nu, gamma, mu, sigma, c1, c2):
    """Same quantities with the inner y-integral done by truncated-normal
    algebra (still no SMN closed forms)."""

    def parts(u):
        s = sigma / math.sqrt(u)
        a = (c1 - mu) / s
        b = (c2 - mu) / s
        m0 = ndtr(b) - ndtr(a) if a < 0 else ndtr(-a) - ndtr(-b)
        pa = 0.0 if math.isinf(a) else _npdf(a)
        pb = 0.0 if math.isinf(b) else _npdf(b)
        apa = 0.0 if math.isinf(a) else a * pa
        bpb = 0.0 if math.isinf(b) else b * pb
        m1 = mu * m0 + s * (pa - pb)
        m2 = (mu * mu + s * s) * m0 + 2 * mu * s * (pa - pb) + s * s * (apa - bpb)
        return m0, m1, m2

    mass = _mixture_integral(family, nu, gamma, lambda u: parts(u)[0])
    eu = _mixture_integral(family, nu, gamma, lambda u: u * parts(u)[0])
    euy = _mixture_integral(family, nu, gamma, lambda u: u * parts(u)[1])
    euy2 = _mixture_integral(family, nu, gamma, lambda u: u * parts(u)[2])
    return eu / mass, euy / mass, euy2 / mass, mass


# -- likelihood -------------------------------------------------------------------

def density(family, nu, gamma, y, mu, sigma2):
    s = math.sqrt(sigma2)
    if family == "N":
        return stats.norm.pdf(y, mu, s)
    if family == "T":
        return stats.t.pdf(y, nu, mu, s)
    return _mixture_integral(family, nu, gamma,
                             lambda u: math.sqrt(u) / s * _npdf((y - mu) * math.sqrt(u) / s))


def interval_mass(family, nu, gamma, c1, c2, mu, sigma2):
    s = math.sqrt(sigma2)
    if family == "N":
        return stats.norm.cdf(c2, mu, s) - stats.norm.cdf(c1, mu, s)
    if family == "T":
        return stats.t.cdf(c2, nu, mu, s) - stats.t.cdf(c1, nu, mu, s)

    def g(u):
        r = math.sqrt(u) / s
        a, b = (c1 - mu) * r, (c2 - mu) * r
        return ndtr(b) - ndtr(a) if a < 0 else ndtr(-a) - ndtr(-b)

    return _mixture_integral(family, nu, gamma, g)


def observed_loglik(family, nu, gamma, lower, upper, censored, mu, sigma2):
    """Sum of log f(y_i) over exact rows and log P(c1 < Y < c2) over
    censored rows, one row at a time."""
    total = 0.0
    for lo, hi, c, m in zip(lower, upper, censored, mu):
        if c:
            total += math.log(interval_mass(family, nu, gamma, lo, hi, m, sigma2))
        else:
            total += math.log(density(family, nu, gamma, lo, m, sigma2))
    return total


# -- splines and least squares ---------------------------------------------------

def bspline_design(knots, degree, x):
    """Basis matrix from scipy's B-spline implementation."""
    x = np.asarray(x, dtype=float)
    return BSpline.design_matrix(x, knots, degree, extrapolate=False).toarray()


def cox_de_boor(knots, degree, j, x):
    """B_{j,degree}(x) by the textbook recursion (right-closed at the last knot)."""
    t = knots
    if degree == 0:
        if t[j] <= x < t[j + 1]:
            return 1.0
        if x == t[-1] and t[j] < t[j + 1] == t[-1]:
            return 1.0
        return 0.0
    out = 0.0
    if t[j + degree] > t[j]:
        out += (x - t[j]) / (t[j + degree] - t[j]) * cox_de_boor(t, degree - 1, j, x)
    if t[j + degree + 1] > t[j + 1]:
        out += (t[j + degree + 1] - x) / (t[j + degree + 1] - t[j + 1]) * cox_de_boor(t, degree - 1, j + 1, x)
    return out


def normal_equations(X, y):
    """Least squares through the normal equations and a Cholesky factor."""
    G = X.T @ X
    L = np.linalg.cholesky(G)
    w = np.linalg.solve(L, X.T @ y)
    return np.linalg.solve(L.T, w)


def min_norm_least_squares(X, y, null):
    """Minimum-norm least squares for a design whose null space is spanned
    by the single known vector ``null``: solve with one column dropped, then
    remove the component along ``null``."""
    null = np.asarray(null, dtype=float)
    drop = int(np.flatnonzero(null)[-1])
    keep = [j for j in range(X.shape[1]) if j != drop]
    x = np.zeros(X.shape[1])
    x[keep] = normal_equations(X[:, keep], y)
    return x - (x @ null) / (null @ null) * null


def grid_argmax(f, lo, hi, points=400):
    """Maximizer of f on a log-spaced grid, refined once around the best point."""
    grid = np.geomspace(lo, hi, points)
    vals = np.array([f(v) for v in grid])
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, points - 1)]
    fine = np.linspace(a, b, points)
    fv = np.array([f(v) for v in fine])
    return float(fine[int(np.argmax(fv))])
