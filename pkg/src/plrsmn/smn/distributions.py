"""Densities, distribution functions and samplers for the SMN families."""

from __future__ import annotations

import numpy as np

from ..core import Family, SmnModel
from . import standard as std


def _std(model: SmnModel, v, mu, sigma2):
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    sigma = np.sqrt(sigma2)
    return (np.asarray(v, dtype=float) - mu) / sigma, sigma


def _out(val, like):
    return float(val) if np.ndim(like) == 0 else val


def logpdf(model: SmnModel, v, mu=0.0, sigma2=1.0):
    t, sigma = _std(model, v, mu, sigma2)
    nu, gamma = model.params
    return _out(std.log_pdf(model.family.code, nu, gamma, t) - np.log(sigma), v)


def pdf(model: SmnModel, v, mu=0.0, sigma2=1.0):
    """SMN density f(v; mu, sigma2, nu).

    The slash density uses the scaled lower incomplete gamma function, whose
    power series is exact at v = mu (the removable 0/0 of the textbook form).
    """
    return _out(np.exp(logpdf(model, v, mu, sigma2)), v)


def logcdf(model: SmnModel, v, mu=0.0, sigma2=1.0):
    t, _ = _std(model, v, mu, sigma2)
    nu, gamma = model.params
    return _out(std.log_cdf(model.family.code, nu, gamma, t), v)


def cdf(model: SmnModel, v, mu=0.0, sigma2=1.0):
    return _out(np.exp(logcdf(model, v, mu, sigma2)), v)


def sample_mixing(model: SmnModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draws of the scale-mixing variable U."""
    fam = model.family
    if fam is Family.N:
        return np.ones(n)
    if fam is Family.T:
        return rng.gamma(model.nu / 2.0, 2.0 / model.nu, size=n)
    if fam is Family.SL:
        return rng.beta(model.nu, 1.0, size=n)
    return np.where(rng.random(n) < model.nu, model.gamma, 1.0)


def sample(model: SmnModel, mu=0.0, sigma2=1.0, n: int = 1, rng: np.random.Generator | None = None) -> np.ndarray:
    """n draws of mu + U^(-1/2) Z with Z ~ N(0, sigma2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    rng = np.random.default_rng() if rng is None else rng
    u = sample_mixing(model, n, rng)
    z = rng.standard_normal(n)
    return mu + np.sqrt(sigma2) * z / np.sqrt(u)
