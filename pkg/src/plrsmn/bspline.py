"""Clamped B-spline bases: knot-count rules, knot placement, evaluation and
the pseudo-design that stacks linear covariates with spline columns."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import Dataset

KNOT_RULES = ("m1", "m2")
PLACEMENTS = ("ES", "ESQ")


def _iroot(n: int, k: int) -> int:
    """floor(n ** (1/k)) without floating-point edge errors at perfect powers."""
    r = int(round(n ** (1.0 / k)))
    while r ** k > n:
        r -= 1
    while (r + 1) ** k <= n:
        r += 1
    return r


def knot_count(n: int, rule) -> int:
    """Number of interior knots.

    ``rule`` is ``"m1"`` (floor(n^(1/3)) + 1), ``"m2"`` (floor(n^(1/5)) + 1)
    or an explicit positive integer, which is passed through.
    """
    if n < 2:
        raise ValueError(f"knot_count needs at least 2 observations, got n={n}")
    if isinstance(rule, str) and rule.lower() in KNOT_RULES:
        return _iroot(int(n), 3 if rule.lower() == "m1" else 5) + 1
    try:
        k = int(rule)
    except (TypeError, ValueError):
        raise ValueError(f"unknown knot rule {rule!r}; use m1, m2 or a positive integer") from None
    if k != rule and not isinstance(rule, str):
        raise ValueError(f"explicit knot count must be an integer, got {rule!r}")
    if k < 1:
        raise ValueError(f"explicit knot count must be >= 1, got {k}")
    return k


@dataclass(frozen=True, eq=False)
class SplineBasis:
    """Clamped B-spline basis of degree ``degree`` on ``boundary``.

    The boundary knots are repeated ``degree + 1`` times, so with ``m``
    interior knots there are ``m + degree + 1`` basis functions and they sum to
    one everywhere on the boundary interval.
    """

    degree: int
    interior_knots: np.ndarray
    boundary: tuple[float, float]
    centering_offsets: np.ndarray | None = None
    collapsed: int = 0

    def __post_init__(self):
        a, b = float(self.boundary[0]), float(self.boundary[1])
        knots = np.asarray(self.interior_knots, dtype=float)
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if not a < b:
            raise ValueError(f"boundary must satisfy a < b, got ({a}, {b})")
        if knots.size and (np.any(np.diff(knots) <= 0) or knots[0] <= a or knots[-1] >= b):
            raise ValueError("interior knots must be strictly increasing and strictly inside (a, b)")
        object.__setattr__(self, "boundary", (a, b))
        object.__setattr__(self, "interior_knots", knots)
        knots.setflags(write=False)
        if self.centering_offsets is not None:
            off = np.asarray(self.centering_offsets, dtype=float)
            if off.shape != (self.dim,):
                raise ValueError(f"centering offsets must have length {self.dim}")
            object.__setattr__(self, "centering_offsets", off)

    @property
    def m(self) -> int:
        return len(self.interior_knots)

    @property
    def dim(self) -> int:
        return self.m + self.degree + 1

    @property
    def knots(self) -> np.ndarray:
        a, b = self.boundary
        d = self.degree
        return np.concatenate([np.full(d + 1, a), self.interior_knots, np.full(d + 1, b)])

    @property
    def centered(self) -> bool:
        return self.centering_offsets is not None

    def with_centering(self, offsets) -> "SplineBasis":
        return SplineBasis(self.degree, self.interior_knots, self.boundary, offsets, self.collapsed)

    def outside(self, x) -> int:
        """Count of points lying outside the boundary interval."""
        x = np.asarray(x, dtype=float)
        a, b = self.boundary
        return int(np.count_nonzero((x < a) | (x > b)))


def place_knots(z, m: int, placement: str = "ESQ", degree: int = 3) -> SplineBasis:
    """Place ``m`` interior knots on the range of ``z``.

    ES spaces knots evenly over [min z, max z]; ESQ puts them at the empirical
    quantiles j/(m+1). Coinciding knots (tied data) are merged and the basis
    records how many were dropped in ``collapsed``.
    """
    z = np.asarray(z, dtype=float)
    if m < 1:
        raise ValueError(f"need at least one interior knot, got m={m}")
    a, b = float(np.min(z)), float(np.max(z))
    if not a < b:
        raise ValueError("z has no spread: all values are equal")
    levels = np.arange(1, m + 1) / (m + 1)
    placement = placement.upper()
    if placement == "ES":
        knots = a + levels * (b - a)
    elif placement == "ESQ":
        knots = np.quantile(z, levels)
    else:
        raise ValueError(f"unknown knot placement {placement!r}; use ES or ESQ")
    knots = np.unique(knots)
    knots = knots[(knots > a) & (knots < b)]
    dropped = m - len(knots)
    if dropped:
        warnings.warn(f"{dropped} coinciding knot(s) merged; using m={len(knots)}", RuntimeWarning, stacklevel=2)
    return SplineBasis(degree, knots, (a, b), collapsed=dropped)


def _span_values(t: np.ndarray, d: int, m: int, x: np.ndarray):
    """Non-zero basis values at each x (de Boor's triangular scheme).

    Returns the span index k and an (len(x), d+1) array holding
    B_{k-d}, ..., B_k.
    """
    k = np.searchsorted(t, x, side="right") - 1
    k = np.clip(k, d, d + m)  # x == b falls into the last non-empty span
    nx = len(x)
    vals = np.zeros((nx, d + 1))
    vals[:, 0] = 1.0
    left = np.zeros((nx, d + 1))
    right = np.zeros((nx, d + 1))
    for j in range(1, d + 1):
        left[:, j] = x - t[k + 1 - j]
        right[:, j] = t[k + j] - x
        saved = np.zeros(nx)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return k, vals


def basis_eval(basis: SplineBasis, x) -> np.ndarray:
    """Evaluate every basis function at ``x``.

    Points outside the boundary are clamped onto it. A scalar ``x`` gives a
    vector of length ``basis.dim``; an array gives shape ``(len(x), dim)``.
    Centering offsets are *not* subtracted here.
    """
    scalar = np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    a, b = basis.boundary
    xv = np.clip(xv, a, b)
    d = basis.degree
    k, vals = _span_values(basis.knots, d, basis.m, xv)
    out = np.zeros((len(xv), basis.dim))
    rows = np.arange(len(xv))[:, None]
    cols = (k - d)[:, None] + np.arange(d + 1)[None, :]
    out[rows, cols] = vals
    return out[0] if scalar else out


def design_columns(basis: SplineBasis, x) -> np.ndarray:
    """Spline columns as they enter the design: centered when the basis
    carries offsets."""
    B = basis_eval(basis, np.atleast_1d(x))
    if basis.centering_offsets is not None:
        B = B - basis.centering_offsets
    return B


def build_basis(dataset: Dataset, rule="m2", placement: str = "ESQ", degree: int = 3) -> SplineBasis:
    """Knot count, placement and (for designs with an intercept) centering
    in one step."""
    m = knot_count(dataset.n, rule)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = place_knots(dataset.z, m, placement, degree)
    if dataset.intercept:
        basis = basis.with_centering(basis_eval(basis, dataset.z).mean(axis=0))
    return basis


def pseudo_design(dataset: Dataset, basis: SplineBasis) -> np.ndarray:
    """Rows (x_i, B(z_i)); shape n x (p + basis.dim)."""
    return np.hstack([dataset.X, design_columns(basis, dataset.z)])


def psi_eval(alpha, basis: SplineBasis, x) -> np.ndarray | float:
    """Smooth component alpha . B(x), net of centering offsets."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (basis.dim,):
        raise ValueError(f"alpha has length {alpha.size}, basis has {basis.dim} functions")
    val = design_columns(basis, x) @ alpha
    return float(val[0]) if np.ndim(x) == 0 else val
