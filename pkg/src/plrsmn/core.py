"""Shared domain types: censored observations, SMN model descriptors, datasets
and fit results."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np


class Family(str, enum.Enum):
    N = "N"
    T = "T"
    SL = "SL"
    CN = "CN"

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self]

    @property
    def n_mixing(self) -> int:
        """Number of mixing parameters (``s`` in the information criteria)."""
        return {Family.N: 0, Family.T: 1, Family.SL: 1, Family.CN: 2}[self]


_FAMILY_CODES = {Family.N: 0, Family.T: 1, Family.SL: 2, Family.CN: 3}
FAMILY_ORDER = (Family.N, Family.T, Family.SL, Family.CN)


class ModelError(ValueError):
    """Invalid SMN model parameters."""


class ZeroMass(ArithmeticError):
    """A censoring interval carries no probability under the current model."""

    def __init__(self, message: str, rows: Sequence[int] | None = None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


@dataclass(frozen=True)
class SmnModel:
    """Scale mixture of normals family with its mixing parameters.

    ``nu`` is the degrees of freedom (T), the Beta shape (SL) or the
    proportion of outliers (CN); ``gamma`` is the CN contamination factor.
    """

    family: Family
    nu: float | None = None
    gamma: float | None = None

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        if fam is Family.N:
            if self.nu is not None or self.gamma is not None:
                raise ModelError("the normal family has no mixing parameters")
            return
        if self.nu is None or not math.isfinite(self.nu):
            raise ModelError(f"family {fam.value} requires a finite nu")
        if fam in (Family.T, Family.SL):
            if self.nu <= 0:
                raise ModelError(f"{fam.value}: nu must be positive, got {self.nu}")
            if self.gamma is not None:
                raise ModelError(f"{fam.value}: gamma is only defined for CN")
        else:
            if not 0 < self.nu < 1:
                raise ModelError(f"CN: nu must lie in (0, 1), got {self.nu}")
            if self.gamma is None or not 0 < self.gamma < 1:
                raise ModelError(f"CN: gamma must lie in (0, 1), got {self.gamma}")

    @classmethod
    def normal(cls) -> "SmnModel":
        return cls(Family.N)

    @classmethod
    def student_t(cls, nu: float) -> "SmnModel":
        return cls(Family.T, nu)

    @classmethod
    def slash(cls, nu: float) -> "SmnModel":
        return cls(Family.SL, nu)

    @classmethod
    def contaminated(cls, nu: float, gamma: float) -> "SmnModel":
        return cls(Family.CN, nu, gamma)

    @property
    def params(self) -> tuple[float, float]:
        """(nu, gamma) with zeros standing in for absent values."""
        return (self.nu or 0.0, self.gamma or 0.0)

    def with_params(self, nu: float | None = None, gamma: float | None = None) -> "SmnModel":
        if self.family is Family.N:
            return self
        return SmnModel(
            self.family,
            self.nu if nu is None else nu,
            self.gamma if (gamma is None and self.family is Family.CN) else gamma,
        )

    def __str__(self) -> str:
        if self.family is Family.N:
            return "N"
        if self.family is Family.CN:
            return f"CN(nu={self.nu:.6g}, gamma={self.gamma:.6g})"
        return f"{self.family.value}(nu={self.nu:.6g})"


@dataclass(frozen=True)
class CensoredObservation:
    """One response record.

    Exact rows carry ``y``; censored rows carry ``lower < upper`` where either
    endpoint may be infinite (left/right censoring) but not both.
    """

    x: tuple[float, ...]
    z: float
    y: float | None = None
    lower: float | None = None
    upper: float | None = None

    @classmethod
    def exact(cls, y: float, x: Iterable[float], z: float) -> "CensoredObservation":
        return cls(tuple(float(v) for v in x), float(z), y=float(y))

    @classmethod
    def interval(cls, lower: float, upper: float, x: Iterable[float], z: float) -> "CensoredObservation":
        return cls(tuple(float(v) for v in x), float(z), lower=float(lower), upper=float(upper))

    @property
    def censored(self) -> bool:
        """The censoring indicator rho (True for interval rows)."""
        return self.y is None


class Violation(NamedTuple):
    row: int
    code: str
    message: str


class DatasetValidationError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = [f"row {v.row}: {v.code}: {v.message}" for v in violations[:20]]
        if len(violations) > 20:
            lines.append(f"... and {len(violations) - 20} more")
        super().__init__("invalid dataset:\n" + "\n".join(lines))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar view of validated observations.

    Exact rows have ``lower == upper == y``. When ``intercept`` is True the
    first column of ``X`` is the constant one.
    """

    lower: np.ndarray
    upper: np.ndarray
    censored: np.ndarray
    X: np.ndarray
    z: np.ndarray
    covariate_names: tuple[str, ...] = ()
    z_name: str = "z"
    response_name: str = "y"
    intercept: bool = False

    def __post_init__(self):
        n = len(self.lower)
        if not (len(self.upper) == len(self.censored) == len(self.z) == self.X.shape[0] == n):
            raise ValueError("dataset columns have unequal lengths")
        if not self.covariate_names:
            names = tuple(f"x{j + 1}" for j in range(self.X.shape[1]))
            if self.intercept and names:
                names = ("(intercept)",) + names[1:]
            object.__setattr__(self, "covariate_names", names)
        for arr in (self.lower, self.upper, self.censored, self.X, self.z):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.lower)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Exact responses, NaN on censored rows."""
        return np.where(self.censored, np.nan, self.lower)

    @property
    def censoring_proportion(self) -> float:
        return int(self.censored.sum()) / self.n

    def observations(self) -> list[CensoredObservation]:
        out = []
        for i in range(self.n):
            x = tuple(float(v) for v in self.X[i])
            if self.censored[i]:
                out.append(CensoredObservation(x, float(self.z[i]), lower=float(self.lower[i]), upper=float(self.upper[i])))
            else:
                out.append(CensoredObservation(x, float(self.z[i]), y=float(self.lower[i])))
        return out

    def replace(self, **changes) -> "Dataset":
        fields = dict(
            lower=self.lower, upper=self.upper, censored=self.censored, X=self.X, z=self.z,
            covariate_names=self.covariate_names, z_name=self.z_name,
            response_name=self.response_name, intercept=self.intercept,
        )
        fields.update(changes)
        return Dataset(**{k: (np.array(v) if isinstance(v, np.ndarray) else v) for k, v in fields.items()})

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return self.replace(lower=self.lower[idx], upper=self.upper[idx], censored=self.censored[idx],
                            X=self.X[idx], z=self.z[idx])


def validate_dataset(
    rows: Iterable[CensoredObservation],
    covariate_names: Sequence[str] | None = None,
    z_name: str = "z",
    response_name: str = "y",
    intercept: bool = False,
) -> Dataset:
    """Check every row and assemble a :class:`Dataset`.

    All violations are collected before raising
    :class:`DatasetValidationError`, so a caller sees every bad row at once.
    """
    rows = list(rows)
    violations: list[Violation] = []
    p = len(rows[0].x) if rows else 0
    for i, r in enumerate(rows):
        if len(r.x) != p:
            violations.append(Violation(i, "RaggedCovariates", f"expected {p} covariates, found {len(r.x)}"))
            continue
        if not all(math.isfinite(v) for v in r.x) or not math.isfinite(r.z):
            violations.append(Violation(i, "NonFiniteValue", "covariates must be finite"))
        if r.y is not None:
            if r.lower is not None or r.upper is not None:
                violations.append(Violation(i, "AmbiguousRow", "row has both an exact value and an interval"))
            elif not math.isfinite(r.y):
                violations.append(Violation(i, "NonFiniteValue", f"exact response {r.y!r} is not finite"))
            continue
        lo, hi = r.lower, r.upper
        if lo is None or hi is None:
            violations.append(Violation(i, "NonFiniteValue", "censored row is missing an endpoint"))
        elif math.isnan(lo) or math.isnan(hi):
            violations.append(Violation(i, "NonFiniteValue", "interval endpoint is NaN"))
        elif math.isinf(lo) and math.isinf(hi) and lo < hi:
            violations.append(Violation(i, "DoublyInfiniteInterval", "both endpoints are infinite"))
        elif not lo < hi:
            violations.append(Violation(i, "InvertedInterval", f"lower {lo!r} is not below upper {hi!r}"))
    if violations:
        raise DatasetValidationError(violations)
    if not rows:
        raise DatasetValidationError([Violation(-1, "Empty", "no rows")])

    n = len(rows)
    censored = np.array([r.y is None for r in rows], dtype=bool)
    lower = np.array([r.lower if r.y is None else r.y for r in rows], dtype=float)
    upper = np.array([r.upper if r.y is None else r.y for r in rows], dtype=float)
    X = np.array([r.x for r in rows], dtype=float).reshape(n, p)
    z = np.array([r.z for r in rows], dtype=float)
    if intercept and (p == 0 or not np.all(X[:, 0] == 1.0)):
        raise DatasetValidationError([Violation(-1, "InterceptColumn", "first covariate must be the constant 1")])
    return Dataset(lower, upper, censored, X, z,
                   covariate_names=tuple(covariate_names) if covariate_names else (),
                   z_name=z_name, response_name=response_name, intercept=intercept)


def dataset_from_arrays(
    lower, upper, censored, X, z, *, covariate_names=None, intercept=False,
    z_name="z", response_name="y",
) -> Dataset:
    """Build a dataset from columns, running the same checks as
    :func:`validate_dataset` (vectorised)."""
    lower = np.asarray(lower, dtype=float).copy()
    upper = np.asarray(upper, dtype=float).copy()
    censored = np.asarray(censored, dtype=bool).copy()
    z = np.asarray(z, dtype=float).copy()
    X = np.asarray(X, dtype=float)
    X = X.reshape(len(z), -1).copy()
    violations: list[Violation] = []
    bad = ~np.isfinite(X).all(axis=1) | ~np.isfinite(z)
    for i in np.flatnonzero(bad):
        violations.append(Violation(int(i), "NonFiniteValue", "covariates must be finite"))
    ex = ~censored
    for i in np.flatnonzero(ex & ~(np.isfinite(lower) & (lower == upper))):
        violations.append(Violation(int(i), "NonFiniteValue", "exact response must be finite"))
    c = censored
    nan = c & (np.isnan(lower) | np.isnan(upper))
    for i in np.flatnonzero(nan):
        violations.append(Violation(int(i), "NonFiniteValue", "interval endpoint is NaN"))
    both = c & ~nan & np.isinf(lower) & np.isinf(upper) & (lower < upper)
    for i in np.flatnonzero(both):
        violations.append(Violation(int(i), "DoublyInfiniteInterval", "both endpoints are infinite"))
    inv = c & ~nan & ~both & ~(lower < upper)
    for i in np.flatnonzero(inv):
        violations.append(Violation(int(i), "InvertedInterval", f"lower {lower[i]!r} is not below upper {upper[i]!r}"))
    if violations:
        violations.sort(key=lambda v: v.row)
        raise DatasetValidationError(violations)
    if intercept and (X.shape[1] == 0 or not np.all(X[:, 0] == 1.0)):
        raise DatasetValidationError([Violation(-1, "InterceptColumn", "first covariate must be the constant 1")])
    return Dataset(lower, upper, censored, X, z,
                   covariate_names=tuple(covariate_names) if covariate_names else (),
                   z_name=z_name, response_name=response_name, intercept=intercept)


@dataclass
class FitResult:
    """Output of an ECME fit.

    ``beta`` and ``alpha`` stack into the pseudo-parameter; ``basis`` is the
    spline basis the ``alpha`` coefficients refer to.
    """

    beta: np.ndarray
    alpha: np.ndarray
    sigma2: float
    model: SmnModel
    loglik: float
    loglik_trace: list[float]
    iterations: int
    converged: bool
    basis: "SplineBasis"  # noqa: F821
    aic: float
    bic: float
    n: int
    covariate_names: tuple[str, ...] = ()
    knot_rule: str = ""
    placement: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def beta_tilde(self) -> np.ndarray:
        return np.concatenate([self.beta, self.alpha])

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def criteria(self) -> tuple[float, float]:
        return self.aic, self.bic

    @property
    def n_params(self) -> int:
        return self.diagnostics.get("n_params", 0)

    def psi(self, z) -> np.ndarray:
        from .bspline import psi_eval

        return psi_eval(self.alpha, self.basis, z)
