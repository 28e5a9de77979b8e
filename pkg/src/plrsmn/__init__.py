"""Partially linear regression with scale-mixture-of-normal errors for
interval-, left- and right-censored responses."""

from .core import (
    CensoredObservation,
    Dataset,
    DatasetValidationError,
    Family,
    FitResult,
    ModelError,
    SmnModel,
    ZeroMass,
    dataset_from_arrays,
    validate_dataset,
)

__version__ = "0.1.0"
