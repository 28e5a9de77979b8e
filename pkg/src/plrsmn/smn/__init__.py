"""Scale mixtures of normals: N, Student-t, slash and contaminated normal."""

from .distributions import cdf, logcdf, logpdf, pdf, sample, sample_mixing
from .expectations import (
    QuadratureRequired,
    TruncatedMoments,
    contaminant_probability,
    e_phi,
    e_Phi,
    mixing_moment,
    truncated_mean,
    truncated_u_moments,
    u_hat_uncensored,
)

__all__ = [
    "cdf", "logcdf", "logpdf", "pdf", "sample", "sample_mixing",
    "QuadratureRequired", "TruncatedMoments", "contaminant_probability", "e_phi", "e_Phi",
    "mixing_moment", "truncated_mean", "truncated_u_moments", "u_hat_uncensored",
]
