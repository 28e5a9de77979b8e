"""Information criteria and grid search over error families and knot
settings."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .bspline import KNOT_RULES, PLACEMENTS, build_basis
from .core import FAMILY_ORDER, Dataset, Family, FitResult

log = logging.getLogger(__name__)

CRITERIA = ("AIC", "BIC")

__all__ = ["information_criteria", "SelectionGrid", "CellFailure", "Selection", "select"]


def information_criteria(loglik_max: float, m: int, d: int, p: int, s: int, n: int) -> tuple[float, float]:
    """AIC and BIC with (m + d + p + s + 1) free parameters.

    ``m`` interior knots, spline degree ``d``, ``p`` linear coefficients and
    ``s`` mixing parameters; the extra one is the scale.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = m + d + p + s + 1
    return 2.0 * k - 2.0 * loglik_max, k * math.log(n) - 2.0 * loglik_max


def _check_rule(rule):
    if isinstance(rule, str):
        if rule not in KNOT_RULES:
            raise ValueError(f"unknown knot rule {rule!r}")
        return rule
    k = int(rule)
    if k != rule or k < 1:
        raise ValueError(f"explicit knot counts must be positive integers, got {rule!r}")
    return k


@dataclass(frozen=True)
class SelectionGrid:
    """Grid of candidate models.

    Knot rules are ``"m1"``, ``"m2"`` or explicit interior-knot counts
    (typically 3 to 10).
    """

    families: tuple[Family, ...] = FAMILY_ORDER
    knot_rules: tuple = ("m2",)
    placements: tuple[str, ...] = ("ESQ",)
    criterion: str = "BIC"

    def __post_init__(self):
        fams = tuple(Family(f) for f in self.families)
        rules = tuple(_check_rule(r) for r in self.knot_rules)
        places = tuple(self.placements)
        crit = str(self.criterion).upper()
        if not fams or not rules or not places:
            raise ValueError("every grid dimension needs at least one entry")
        if len(set(fams)) != len(fams) or len(set(rules)) != len(rules) or len(set(places)) != len(places):
            raise ValueError("grid dimensions must not repeat entries")
        for pl in places:
            if pl not in PLACEMENTS:
                raise ValueError(f"unknown placement {pl!r}")
        if crit not in CRITERIA:
            raise ValueError(f"criterion must be AIC or BIC, got {self.criterion!r}")
        object.__setattr__(self, "families", tuple(sorted(fams, key=FAMILY_ORDER.index)))
        object.__setattr__(self, "knot_rules", rules)
        object.__setattr__(self, "placements", places)
        object.__setattr__(self, "criterion", crit)

    def knot_cells(self):
        return [(r, pl) for r in self.knot_rules for pl in self.placements]

    def __len__(self):
        return len(self.families) * len(self.knot_rules) * len(self.placements)


@dataclass(frozen=True)
class CellFailure:
    family: Family
    knot_rule: object
    placement: str
    error: str


@dataclass
class Selection:
    """Ranked fits (best first) and the cells that failed."""

    ranked: list[FitResult]
    failures: list[CellFailure]
    criterion: str

    @property
    def best(self) -> FitResult:
        return self.ranked[0]

    def score(self, fit: FitResult) -> float:
        return fit.aic if self.criterion == "AIC" else fit.bic

    def __iter__(self):
        return iter(self.ranked)

    def __len__(self):
        return len(self.ranked)


def _fit_knot_cell(dataset: Dataset, families, rule, placement, base_config):
    """Fit every family on one knot cell, seeding heavy-tailed fits from the
    normal fit of the same cell."""
    from .ecme import fit, theta_of

    fits, failures = [], []
    try:
        basis = build_basis(dataset, rule, placement, base_config.degree)
    except Exception as exc:  # bad cell, e.g. too many knots for the data
        return fits, [CellFailure(f, rule, placement, f"{type(exc).__name__}: {exc}") for f in families]
    seed = None
    todo = list(families)
    if Family.N not in todo and len(todo) > 0:
        todo = [Family.N] + todo
    for fam in todo:
        cfg = replace(base_config, family=fam, knot_rule=rule, placement=placement,
                      nu_bounds=base_config.nu_bounds if fam is base_config.family else None)
        try:
            res = fit(dataset, cfg, basis=basis, start=seed)
        except Exception as exc:
            if fam in families:
                failures.append(CellFailure(fam, rule, placement, f"{type(exc).__name__}: {exc}"))
            continue
        if fam is Family.N:
            seed = theta_of(res)
        if fam in families:
            fits.append(res)
    return fits, failures


def _cell_job(args):
    return _fit_knot_cell(*args)


def _rank_key(criterion):
    def key(fit: FitResult):
        score = fit.aic if criterion == "AIC" else fit.bic
        return (score, fit.n_params, FAMILY_ORDER.index(fit.model.family))
    return key


def select(dataset: Dataset, grid: SelectionGrid, base_config=None, parallel: int = 1) -> Selection:
    """Fit every grid cell and rank by the grid's criterion (ascending).

    Ties go to the model with fewer parameters, then to the family order
    N < T < SL < CN. Failed cells are reported in ``failures``; if every cell
    fails a RuntimeError is raised.
    """
    from .ecme import EcmeConfig

    base_config = base_config or EcmeConfig()
    jobs = [(dataset, grid.families, r, pl, base_config) for r, pl in grid.knot_cells()]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(j) for j in jobs]
    fits, failures = [], []
    for f, fl in results:
        fits.extend(f)
        failures.extend(fl)
    for fl in failures:
        log.warning("cell %s/%s/%s failed: %s", fl.family.value, fl.knot_rule, fl.placement, fl.error)
    if not fits:
        raise RuntimeError("every grid cell failed: " + "; ".join(f.error for f in failures))
    fits.sort(key=_rank_key(grid.criterion))
    return Selection(fits, failures, grid.criterion)
