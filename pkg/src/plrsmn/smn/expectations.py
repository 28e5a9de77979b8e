"""Conditional expectations of the mixing variable used by the E-step, plus
the truncated conditional mean used for imputation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Family, SmnModel, ZeroMass
from . import standard as std
from .quadrature import truncated_mean_quad
from .standard import QuadratureRequired

MIN_LOG_MASS = math.log(1e-300)

__all__ = [
    "QuadratureRequired", "TruncatedMoments", "e_phi", "e_Phi", "mixing_moment",
    "u_hat_uncensored", "truncated_u_moments", "truncated_mean", "contaminant_probability",
]


@dataclass(frozen=True)
class TruncatedMoments:
    """E(U | .), E(UY | .), E(UY^2 | .) on a censoring interval and the
    interval's probability."""

    u_hat: np.ndarray | float
    uy_hat: np.ndarray | float
    uy2_hat: np.ndarray | float
    prob_mass: np.ndarray | float


def _scalarize(val, *likes):
    return float(val) if all(np.ndim(x) == 0 for x in likes) else val


def e_phi(model: SmnModel, r: float, h):
    """E[U^r phi(h sqrt(U))]; raises QuadratureRequired outside the closed
    form's domain (T: nu + 2r <= 0, SL: nu + r <= 0)."""
    nu, gamma = model.params
    return _scalarize(std.e_phi(model.family.code, nu, gamma, r, h), h)


def e_Phi(model: SmnModel, r: float, h):
    """E[U^r Phi(h sqrt(U))]."""
    nu, gamma = model.params
    return _scalarize(std.e_Phi(model.family.code, nu, gamma, r, h), h)


def mixing_moment(model: SmnModel, r: float) -> float:
    nu, gamma = model.params
    std.check_regime(model.family.code, nu, r)
    return float(np.exp(std.log_moment(model.family.code, nu, gamma, r)))


def u_hat_uncensored(model: SmnModel, y, mu, sigma):
    """E(U | Y = y) for an exactly observed response."""
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    nu, gamma = model.params
    t = (np.asarray(y, dtype=float) - mu) / sigma
    u, _ = std.u_hat_exact(model.family.code, nu, gamma, t)
    return _scalarize(u, y, mu, sigma)


def _standardize(mu, sigma, c1, c2):
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("sigma must be positive")
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if np.any(~(c1 < c2)):
        raise ValueError("censoring interval needs c1 < c2")
    return (c1 - mu) / sigma, (c2 - mu) / sigma


def _check_mass(lm):
    bad = np.flatnonzero(np.atleast_1d(lm) <= MIN_LOG_MASS)
    if bad.size:
        raise ZeroMass("censoring interval has (numerically) zero probability", rows=bad.tolist())


def truncated_u_moments(model: SmnModel, mu, sigma, c1, c2) -> TruncatedMoments:
    """Moments of (U, Y) given c1 <= Y <= c2.

    uy = mu u + sigma E(UT|.) and uy2 = mu^2 u + 2 mu sigma E(UT|.) +
    sigma^2 E(UT^2|.), with T the standardized response.
    """
    t1, t2 = _standardize(mu, sigma, c1, c2)
    nu, gamma = model.params
    lm, eu, eut, eut2, _ = std.truncated_moments(model.family.code, nu, gamma, t1, t2)
    _check_mass(lm)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    uy = mu * eu + sigma * eut
    uy2 = mu * mu * eu + 2.0 * mu * sigma * eut + sigma * sigma * eut2
    likes = (mu, sigma, c1, c2)
    return TruncatedMoments(_scalarize(eu, *likes), _scalarize(uy, *likes),
                            _scalarize(uy2, *likes), _scalarize(np.exp(lm), *likes))


def truncated_mean(model: SmnModel, mu, sigma, c1, c2):
    """E(Y | c1 <= Y <= c2)."""
    t1, t2 = _standardize(mu, sigma, c1, c2)
    nu, gamma = model.params
    code = model.family.code
    _check_mass(std.log_mass(code, nu, gamma, t1, t2))
    try:
        et = std.truncated_mean(code, nu, gamma, t1, t2)
    except QuadratureRequired:
        et = np.vectorize(lambda a, b: truncated_mean_quad(code, nu, gamma, a, b))(t1, t2)
    val = np.asarray(mu, dtype=float) + np.asarray(sigma, dtype=float) * et
    return _scalarize(val, mu, sigma, c1, c2)


def contaminant_probability(model: SmnModel, mu, sigma, y=None, c1=None, c2=None):
    """Posterior probability that a CN observation came from the inflated
    component, for an exact value ``y`` or an interval ``(c1, c2)``."""
    if model.family is not Family.CN:
        raise ValueError("contaminant probability is defined for the CN family only")
    nu, gamma = model.params
    if y is not None:
        _, b = std.u_hat_exact(std.CN, nu, gamma, (np.asarray(y, dtype=float) - mu) / sigma)
        return _scalarize(b, y, mu, sigma)
    t1, t2 = _standardize(mu, sigma, c1, c2)
    lm, _, _, _, b = std.truncated_moments(std.CN, nu, gamma, t1, t2)
    _check_mass(lm)
    return _scalarize(b, mu, sigma, c1, c2)
