"""ECME estimation for the partially linear SMN model with censored responses.

Each iteration runs an E-step (conditional moments of the mixing variable),
a closed-form CM-step for the regression coefficients and scale, and a
CML-step that maximizes the observed-data log-likelihood over the mixing
parameters with the other parameters held fixed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import optimize

from . import kernels
from .bspline import SplineBasis, build_basis, knot_count, pseudo_design
from .core import Dataset, Family, FitResult, ModelError, SmnModel, ZeroMass
from .smn import truncated_mean
from .smn.expectations import MIN_LOG_MASS

log = logging.getLogger(__name__)

DEFAULT_NU_BOUNDS = {
    Family.T: (1.1, 100.0),
    Family.SL: (0.6, 100.0),
    Family.CN: (0.01, 0.99),
}
DEFAULT_GAMMA_BOUNDS = (0.01, 0.99)
NU_XATOL = 1e-4
DECREASE_TOL = 1e-8
SIGMA2_FLOOR = 1e-12
WIDEN = 1e-6

__all__ = [
    "EcmeConfig", "Theta", "EStepExpectations", "CmResult", "CmlResult", "NonFiniteLoglik",
    "loglik", "e_step", "cm_step", "cml_step", "initialize", "fit", "impute",
]


class NonFiniteLoglik(ModelError):
    """The observed log-likelihood became non-finite during a fit."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class EcmeConfig:
    """Settings for one ECME fit.

    Parameters
    ----------
    family : Family or str
        Error family, one of N, T, SL, CN.
    knot_rule : {"m1", "m2"} or int
        Interior-knot rule or an explicit count.
    placement : {"ES", "ESQ"}
        Equally spaced or sample-quantile knots.
    degree : int
        Spline degree.
    epsilon : float
        Relative log-likelihood increment at which iteration stops.
    k_max : int
        Iteration cap.
    nu_bounds, gamma_bounds : tuple of float, optional
        Search boxes for the mixing parameters; family defaults when omitted.
    seed : int, optional
        Carried through to results for bookkeeping; the fit is deterministic.
    """

    family: Family = Family.N
    knot_rule: str | int = "m2"
    placement: str = "ESQ"
    degree: int = 3
    epsilon: float = 1e-5
    k_max: int = 2000
    nu_bounds: tuple[float, float] | None = None
    gamma_bounds: tuple[float, float] | None = None
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "placement", str(self.placement).upper())
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max}")
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.placement not in ("ES", "ESQ"):
            raise ValueError(f"placement must be ES or ESQ, got {self.placement!r}")
        knot_count(10, self.knot_rule)  # validates the rule
        lo, hi = self.bounds_nu
        fam = self.family
        if fam is not Family.N:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"nu bounds must be finite with lo < hi, got ({lo}, {hi})")
            if fam is Family.CN and not (0 < lo and hi < 1):
                raise ValueError("CN nu bounds must lie inside (0, 1)")
            if fam in (Family.T, Family.SL) and lo <= 0:
                raise ValueError(f"{fam.value} nu bounds must be positive")
        if fam is Family.CN:
            g0, g1 = self.bounds_gamma
            if not (0 < g0 < g1 <= 1):
                raise ValueError("gamma bounds must satisfy 0 < lo < hi <= 1")

    @property
    def bounds_nu(self) -> tuple[float, float]:
        if self.nu_bounds is not None:
            return float(self.nu_bounds[0]), float(self.nu_bounds[1])
        return DEFAULT_NU_BOUNDS.get(self.family, (math.nan, math.nan))

    @property
    def bounds_gamma(self) -> tuple[float, float]:
        if self.gamma_bounds is not None:
            return float(self.gamma_bounds[0]), float(self.gamma_bounds[1])
        return DEFAULT_GAMMA_BOUNDS

    def initial_model(self) -> SmnModel:
        fam = self.family
        if fam is Family.N:
            return SmnModel.normal()
        if fam is Family.CN:
            lo, hi = self.bounds_nu
            g0, g1 = self.bounds_gamma
            return SmnModel.contaminated(min(max(0.1, lo), hi), min(max(0.9, g0), g1))
        lo, hi = self.bounds_nu
        nu = min(max(20.0, lo), hi)
        return SmnModel.student_t(nu) if fam is Family.T else SmnModel.slash(nu)


@dataclass(frozen=True)
class Theta:
    """Parameter point: pseudo-coefficients, scale and error model."""

    beta_tilde: np.ndarray
    sigma2: float
    model: SmnModel

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass
class EStepExpectations:
    """Per-row E(U|.), E(UY|.), E(UY^2|.) and, for CN, the contaminant
    probabilities ``b_hat``."""

    u_hat: np.ndarray
    uy_hat: np.ndarray
    uy2_hat: np.ndarray
    b_hat: np.ndarray | None = None
    widened_rows: tuple[int, ...] = ()
    endpoint_rows: tuple[int, ...] = ()

    @property
    def degenerate_rows(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.widened_rows) | set(self.endpoint_rows)))


class CmResult(NamedTuple):
    beta_tilde: np.ndarray
    sigma2: float
    rank: int
    rank_deficient: bool
    sigma2_floored: bool


class CmlResult(NamedTuple):
    model: SmnModel
    loglik: float
    at_bound: bool
    evaluations: int


class _Problem:
    """Dataset pieces split into exact and censored rows, with the design."""

    def __init__(self, dataset: Dataset, design: np.ndarray):
        design = np.asarray(design, dtype=float)
        if design.shape[0] != dataset.n:
            raise ValueError(f"design has {design.shape[0]} rows, dataset has {dataset.n}")
        self.n = dataset.n
        self.design = design
        cens = np.asarray(dataset.censored, dtype=bool)
        self.exact = np.flatnonzero(~cens)
        self.cens = np.flatnonzero(cens)
        self.y = np.ascontiguousarray(dataset.lower[self.exact], dtype=float)
        self.lo = np.ascontiguousarray(dataset.lower[self.cens], dtype=float)
        self.hi = np.ascontiguousarray(dataset.upper[self.cens], dtype=float)

    def standardize(self, theta: Theta):
        mu = self.design @ np.asarray(theta.beta_tilde, dtype=float)
        s = theta.sigma
        t = np.ascontiguousarray((self.y - mu[self.exact]) / s)
        mc = mu[self.cens]
        a = np.ascontiguousarray((self.lo - mc) / s)
        b = np.ascontiguousarray((self.hi - mc) / s)
        return mu, t, a, b

    def loglik(self, model: SmnModel, sigma: float, t, a, b) -> float:
        nu, gamma = model.params
        val = kernels.loglik_sum(model.family.code, nu, gamma, t, a, b) - t.size * math.log(sigma)
        return val if not math.isnan(val) else -math.inf


def _problem(dataset: Dataset, design) -> _Problem:
    if design is None:
        raise ValueError("a design matrix is required; see bspline.pseudo_design")
    return _Problem(dataset, design)


def loglik(theta: Theta, dataset: Dataset, design: np.ndarray, diagnostics: dict | None = None) -> float:
    """Observed-data log-likelihood.

    Exact rows contribute log f((y - mu)/sigma) - log sigma, censored rows the
    log probability of their interval. A censored row whose interval has
    zero probability makes the result -inf; its indices go into
    ``diagnostics["zero_mass_rows"]`` when a dict is passed.
    """
    prob = _problem(dataset, design)
    _, t, a, b = prob.standardize(theta)
    val = prob.loglik(theta.model, theta.sigma, t, a, b)
    if diagnostics is not None:
        nu, gamma = theta.model.params
        _, lc = kernels.loglik_terms(theta.model.family.code, nu, gamma, t[:0], a, b)
        diagnostics["zero_mass_rows"] = prob.cens[~(lc > MIN_LOG_MASS)].tolist()
    return val


def _e_step(prob: _Problem, theta: Theta) -> EStepExpectations:
    model = theta.model
    code = model.family.code
    nu, gamma = model.params
    sigma = theta.sigma
    mu, t, a, b = prob.standardize(theta)
    n = prob.n
    u = np.empty(n)
    uy = np.empty(n)
    uy2 = np.empty(n)
    bh = np.zeros(n)

    ue, be = kernels.estep_exact(code, nu, gamma, t)
    u[prob.exact] = ue
    uy[prob.exact] = prob.y * ue
    uy2[prob.exact] = prob.y * prob.y * ue
    bh[prob.exact] = be

    widened: list[int] = []
    endpoint: list[int] = []
    if prob.cens.size:
        lm, eu, eut, eut2, bc = kernels.estep_censored(code, nu, gamma, a, b)
        bad = ~(lm > MIN_LOG_MASS)
        if bad.any():
            # widen degenerate intervals slightly; if the mass is still nil the
            # row is treated as observed at its endpoint nearest the centre
            idx = np.flatnonzero(bad)
            wa = np.ascontiguousarray(a[idx] - WIDEN)
            wb = np.ascontiguousarray(b[idx] + WIDEN)
            r = kernels.estep_censored(code, nu, gamma, wa, wb)
            ok = r[0] > MIN_LOG_MASS
            for arr, new in zip((lm, eu, eut, eut2, bc), r):
                arr[idx[ok]] = new[ok]
            widened = prob.cens[idx[ok]].tolist()
            far = idx[~ok]
            if far.size:
                t0 = np.ascontiguousarray(np.where(a[far] > 0, a[far], b[far]))
                u0, b0 = kernels.estep_exact(code, nu, gamma, t0)
                eu[far] = u0
                eut[far] = u0 * t0
                eut2[far] = u0 * t0 * t0
                bc[far] = b0
                endpoint = prob.cens[far].tolist()
        mc = mu[prob.cens]
        u[prob.cens] = eu
        uy[prob.cens] = mc * eu + sigma * eut
        uy2[prob.cens] = mc * mc * eu + 2.0 * mc * sigma * eut + sigma * sigma * eut2
        bh[prob.cens] = bc
    return EStepExpectations(u, uy, uy2, bh if model.family is Family.CN else None,
                             tuple(widened), tuple(endpoint))


def e_step(theta: Theta, dataset: Dataset, design: np.ndarray) -> EStepExpectations:
    """Conditional expectations given the data at ``theta``.

    Exact rows: E(U|y), with E(UY|y) = y E(U|y) and E(UY^2|y) = y^2 E(U|y).
    Censored rows: the truncated moments on the censoring interval.
    Intervals with underflowing probability are handled as described in
    :class:`EStepExpectations` (``widened_rows``, ``endpoint_rows``).
    """
    return _e_step(_problem(dataset, design), theta)


def cm_step(expectations: EStepExpectations, design: np.ndarray, dataset: Dataset | None = None,
            expected_rank: int | None = None) -> CmResult:
    """Weighted least squares for the pseudo-coefficients, then the scale.

    Solves sum_i u_i x_i x_i' b = sum_i uy_i x_i with an SVD-based
    least-squares solver, which returns the minimum-norm solution when the
    design is rank deficient. ``rank_deficient`` is set when the numerical
    rank falls below ``expected_rank`` (default: the column count).
    """
    design = np.asarray(design, dtype=float)
    u = np.asarray(expectations.u_hat, dtype=float)
    uy = np.asarray(expectations.uy_hat, dtype=float)
    uy2 = np.asarray(expectations.uy2_hat, dtype=float)
    if dataset is not None and design.shape[0] != dataset.n:
        raise ValueError("design rows do not match the dataset")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(uy)) and np.all(np.isfinite(uy2))):
        raise ModelError("non-finite E-step expectations")
    sw = np.sqrt(u)
    bt, _, rank, _ = np.linalg.lstsq(design * sw[:, None], uy / sw, rcond=None)
    mu = design @ bt
    s2 = float(np.mean(uy2 - 2.0 * uy * mu + u * mu * mu))
    floored = not s2 > SIGMA2_FLOOR
    if floored:
        s2 = SIGMA2_FLOOR
    want = design.shape[1] if expected_rank is None else expected_rank
    return CmResult(bt, s2, int(rank), int(rank) < want, floored)


def _near_bound(x: float, lo: float, hi: float) -> bool:
    return abs(x - lo) <= 1e-3 * max(1.0, abs(lo)) or abs(hi - x) <= 1e-3 * max(1.0, abs(hi))


def _cml(prob: _Problem, beta_tilde, sigma2: float, model: SmnModel, nu_bounds, gamma_bounds,
         b_hat=None) -> CmlResult:
    fam = model.family
    theta = Theta(beta_tilde, sigma2, model)
    _, t, a, b = prob.standardize(theta)
    sigma = theta.sigma
    ll_old = prob.loglik(model, sigma, t, a, b)
    if fam is Family.N:
        return CmlResult(model, ll_old, False, 0)

    evals = 0

    def objective(make):
        def f(x):
            nonlocal evals
            evals += 1
            val = prob.loglik(make(x), sigma, t, a, b)
            return -val if math.isfinite(val) else math.inf
        return f

    if fam is Family.CN:
        lo, hi = nu_bounds
        nu_new = float(np.clip(np.mean(b_hat), lo, hi)) if b_hat is not None else model.nu
        cand = model.with_params(nu=nu_new)
        ll_c = prob.loglik(cand, sigma, t, a, b)
        if not ll_c >= ll_old:
            cand, ll_c = model, ll_old
        g0, g1 = gamma_bounds
        res = optimize.minimize_scalar(objective(lambda g: cand.with_params(gamma=g)), bounds=(g0, g1),
                                       method="bounded", options={"xatol": NU_XATOL})
        best, ll_best = cand, ll_c
        if math.isfinite(res.fun) and -res.fun > ll_c:
            best, ll_best = cand.with_params(gamma=float(res.x)), -float(res.fun)
        at_bound = _near_bound(best.nu, lo, hi) or _near_bound(best.gamma, g0, g1)
        return CmlResult(best, ll_best, at_bound, evals)

    lo, hi = nu_bounds
    res = optimize.minimize_scalar(objective(lambda v: model.with_params(nu=v)), bounds=(lo, hi),
                                   method="bounded", options={"xatol": NU_XATOL})
    best, ll_best = model, ll_old
    if math.isfinite(res.fun) and -res.fun > ll_old:
        best, ll_best = model.with_params(nu=float(res.x)), -float(res.fun)
    return CmlResult(best, ll_best, _near_bound(best.nu, lo, hi), evals)


def cml_step(beta_tilde, sigma2: float, dataset: Dataset, design: np.ndarray, model: SmnModel,
             nu_bounds=None, gamma_bounds=None, b_hat=None) -> CmlResult:
    """Update the mixing parameters by maximizing the observed log-likelihood.

    T and SL: bounded Brent search over nu. CN: nu is the mean of the
    contaminant probabilities ``b_hat`` (from the preceding E-step), then
    gamma by bounded search. N: unchanged. A candidate that does not improve
    the likelihood is discarded.
    """
    nb = nu_bounds if nu_bounds is not None else DEFAULT_NU_BOUNDS.get(model.family)
    gb = gamma_bounds if gamma_bounds is not None else DEFAULT_GAMMA_BOUNDS
    return _cml(_problem(dataset, design), np.asarray(beta_tilde, dtype=float), float(sigma2), model, nb, gb, b_hat)


def surrogate_response(dataset: Dataset) -> np.ndarray:
    """Responses used for the starting least-squares fit: exact values,
    interval midpoints, and the finite endpoint of half-infinite intervals."""
    lo = np.asarray(dataset.lower, dtype=float)
    hi = np.asarray(dataset.upper, dtype=float)
    with np.errstate(invalid="ignore"):
        mid = 0.5 * (lo + hi)
    return np.where(np.isneginf(lo), hi, np.where(np.isposinf(hi), lo, mid))


def initialize(dataset: Dataset, config: EcmeConfig, design: np.ndarray) -> Theta:
    """Least squares on the pseudo-design with censored responses replaced by
    :func:`surrogate_response`; sigma^2 is the mean squared residual."""
    y = surrogate_response(dataset)
    design = np.asarray(design, dtype=float)
    bt, *_ = np.linalg.lstsq(design, y, rcond=None)
    s2 = max(float(np.mean((y - design @ bt) ** 2)), SIGMA2_FLOOR)
    return Theta(bt, s2, config.initial_model())


def expected_rank(dataset: Dataset, basis: SplineBasis) -> int:
    """Column rank the pseudo-design should have: centering the spline
    columns removes exactly one direction."""
    return dataset.p + basis.dim - (1 if basis.centered else 0)


def n_parameters(dataset: Dataset, basis: SplineBasis, family: Family) -> int:
    return expected_rank(dataset, basis) + family.n_mixing + 1


def fit(dataset: Dataset, config: EcmeConfig | None = None, *, basis: SplineBasis | None = None,
        start: Theta | None = None) -> FitResult:
    """Fit the model by ECME.

    Parameters
    ----------
    dataset : Dataset
    config : EcmeConfig, optional
    basis : SplineBasis, optional
        Precomputed basis; built from ``config`` when omitted.
    start : Theta, optional
        Starting point. Its model is replaced by the config family's default
        start when the families differ, so a normal fit can seed a
        heavy-tailed one.

    Returns
    -------
    FitResult
        ``converged`` is True when the relative increment rule fired;
        ``diagnostics["stop_reason"]`` is one of "tolerance", "k_max",
        "decrease".
    """
    from .select import information_criteria

    config = config or EcmeConfig()
    if basis is None:
        basis = build_basis(dataset, config.knot_rule, config.placement, config.degree)
    design = pseudo_design(dataset, basis)
    prob = _Problem(dataset, design)
    want_rank = expected_rank(dataset, basis)

    if start is None:
        theta = initialize(dataset, config, design)
    else:
        model = start.model if start.model.family is config.family else config.initial_model()
        theta = Theta(np.asarray(start.beta_tilde, dtype=float).copy(), float(start.sigma2), model)
    if theta.beta_tilde.shape != (design.shape[1],):
        raise ValueError("starting coefficients do not match the design")

    _, t, a, b = prob.standardize(theta)
    ll = prob.loglik(theta.model, theta.sigma, t, a, b)
    trace = [ll]
    if not math.isfinite(ll):
        raise NonFiniteLoglik("log-likelihood is not finite at the starting values", trace)

    diag = {
        "rank": 0, "expected_rank": want_rank, "rank_deficient": False, "sigma2_floored": False,
        "nu_at_bound": False, "zero_mass_rows": [], "endpoint_rows": [], "cml_evaluations": 0,
        "backend": kernels.BACKEND, "knots_collapsed": basis.collapsed,
    }
    zero_rows: set[int] = set()
    endpoint_rows: set[int] = set()
    best = theta
    stop = "k_max"
    converged = False
    k = 0
    while k < config.k_max:
        k += 1
        ex = _e_step(prob, theta)
        zero_rows.update(ex.degenerate_rows)
        endpoint_rows.update(ex.endpoint_rows)
        cm = cm_step(ex, design, expected_rank=want_rank)
        diag["rank"] = cm.rank
        diag["rank_deficient"] |= cm.rank_deficient
        diag["sigma2_floored"] |= cm.sigma2_floored
        cml = _cml(prob, cm.beta_tilde, cm.sigma2, theta.model, config.bounds_nu, config.bounds_gamma, ex.b_hat)
        diag["cml_evaluations"] += cml.evaluations
        diag["nu_at_bound"] = cml.at_bound
        new = Theta(cm.beta_tilde, cm.sigma2, cml.model)
        ll_new = cml.loglik
        if not math.isfinite(ll_new):
            trace.append(ll_new)
            raise NonFiniteLoglik(f"log-likelihood became non-finite at iteration {k}", trace)
        trace.append(ll_new)
        rel = (ll_new - ll) / abs(ll) if ll != 0 else ll_new - ll
        if rel < -DECREASE_TOL:
            stop = "decrease"
            log.warning("log-likelihood decreased at iteration %d (relative %.3g); stopping", k, rel)
            break
        theta, best = new, new
        ll = ll_new
        if rel <= config.epsilon:
            stop = "tolerance"
            converged = True
            break

    diag["zero_mass_rows"] = sorted(zero_rows)
    diag["endpoint_rows"] = sorted(endpoint_rows)
    diag["stop_reason"] = stop
    n_par = n_parameters(dataset, basis, config.family)
    diag["n_params"] = n_par
    p_count = n_par - basis.m - basis.degree - config.family.n_mixing - 1
    best_ll = max(trace[:len(trace) - (1 if stop == "decrease" else 0)])
    aic, bic = information_criteria(best_ll, basis.m, basis.degree, p_count, config.family.n_mixing, dataset.n)
    p = dataset.p
    return FitResult(
        beta=best.beta_tilde[:p].copy(), alpha=best.beta_tilde[p:].copy(), sigma2=best.sigma2,
        model=best.model, loglik=best_ll, loglik_trace=trace, iterations=k, converged=converged,
        basis=basis, aic=aic, bic=bic, n=dataset.n, covariate_names=dataset.covariate_names,
        knot_rule=str(config.knot_rule), placement=config.placement, diagnostics=diag,
    )


def theta_of(result: FitResult) -> Theta:
    return Theta(result.beta_tilde, result.sigma2, result.model)


def impute(result: FitResult, dataset: Dataset) -> np.ndarray:
    """Exact responses unchanged; censored rows replaced by E(Y | interval)
    at the fitted parameters, clipped into the interval against rounding.

    Raises
    ------
    ZeroMass
        If an interval has no probability under the fit.
    """
    design = pseudo_design(dataset, result.basis)
    if design.shape[1] != result.beta_tilde.size:
        raise ValueError("dataset covariates do not match the fit")
    out = np.array(dataset.lower, dtype=float)
    cens = np.flatnonzero(dataset.censored)
    if cens.size == 0:
        return out
    mu = design[cens] @ result.beta_tilde
    lo = np.asarray(dataset.lower[cens], dtype=float)
    hi = np.asarray(dataset.upper[cens], dtype=float)
    try:
        val = np.asarray(truncated_mean(result.model, mu, result.sigma, lo, hi), dtype=float)
    except ZeroMass as exc:
        raise ZeroMass(str(exc), rows=[int(cens[r]) for r in exc.rows]) from None
    out[cens] = np.clip(val, lo, hi)
    return out


def refit_step(result: FitResult, dataset: Dataset) -> np.ndarray:
    """One further E + CM step from a fitted point; returns the new
    pseudo-coefficients (used to check the fixed-point property)."""
    design = pseudo_design(dataset, result.basis)
    prob = _Problem(dataset, design)
    ex = _e_step(prob, theta_of(result))
    return cm_step(ex, design).beta_tilde


__all__ += ["surrogate_response", "expected_rank", "n_parameters", "theta_of", "refit_step"]
