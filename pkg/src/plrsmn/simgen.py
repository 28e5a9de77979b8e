"""Synthetic data for simulation studies: regression designs, censoring
schemes, noise and perturbation injectors, study metrics and a reproducible
replication driver."""

from __future__ import annotations

import logging
import math
import re
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .core import Dataset, Family, FitResult, SmnModel, dataset_from_arrays
from .smn import sample_mixing

log = logging.getLogger(__name__)

__all__ = [
    "Law", "ErrorLaw", "Censoring", "ScenarioSpec", "Truth", "StudyReport",
    "parse_law", "parse_error_law", "parse_censoring", "psi_function",
    "gen_regression", "censor_interval", "censor_left", "censor_right", "censor",
    "inject_noise", "perturb_max", "bias_mse", "iabias_mise", "mean_absolute_error", "mmre",
    "run_replication", "run_study", "preset",
]

_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def _parse_call(text: str) -> tuple[str, tuple[float, ...]]:
    m = _CALL.match(text)
    if not m:
        raise ValueError(f"cannot parse {text!r}; expected name or name(a, b, ...)")
    name, args = m.group(1), m.group(2)
    vals: tuple[float, ...] = ()
    if args is not None and args.strip():
        try:
            vals = tuple(float(a) for a in args.split(","))
        except ValueError:
            raise ValueError(f"non-numeric argument in {text!r}") from None
    return name, vals


def _fmt(name: str, params) -> str:
    return f"{name}({', '.join(repr(float(p)) for p in params)})" if params else name


# -- laws ---------------------------------------------------------------------

_LAW_ARITY = {"normal": 2, "bernoulli": 1, "uniform": 2, "const": 1}


@dataclass(frozen=True)
class Law:
    """Distribution of one covariate column: normal(mean, sd),
    bernoulli(p), uniform(lo, hi) or const(value)."""

    kind: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _LAW_ARITY:
            raise ValueError(f"unknown law {self.kind!r}; use one of {sorted(_LAW_ARITY)}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _LAW_ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_LAW_ARITY[self.kind]} parameter(s)")
        if self.kind == "normal" and not params[1] >= 0:
            raise ValueError("normal sd must be >= 0")
        if self.kind == "bernoulli" and not 0 <= params[0] <= 1:
            raise ValueError("bernoulli p must be in [0, 1]")
        if self.kind == "uniform" and not params[0] < params[1]:
            raise ValueError("uniform needs lo < hi")
        object.__setattr__(self, "params", params)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a = self.params
        if self.kind == "normal":
            return rng.normal(a[0], a[1], size=n)
        if self.kind == "bernoulli":
            return rng.binomial(1, a[0], size=n).astype(float)
        if self.kind == "uniform":
            return rng.uniform(a[0], a[1], size=n)
        return np.full(n, a[0])

    def __str__(self):
        return _fmt(self.kind, self.params)


def parse_law(text: str | Law) -> Law:
    if isinstance(text, Law):
        return text
    name, vals = _parse_call(text)
    return Law(name.lower(), vals)


_ERROR_ARITY = {"N": 0, "T": 1, "SL": 1, "CN": 2, "laplace_mix": 0, "bs_mix": 2, "gig_mix": 3}


@dataclass(frozen=True)
class ErrorLaw:
    """Standardized error law eps = U^(-1/2) Z.

    ``N``, ``T(nu)``, ``SL(nu)`` and ``CN(nu, gamma)`` are the fittable
    families. The remaining laws exist only as generators: ``laplace_mix``
    draws 1/U from the exponential law with mean 2 (standard Laplace
    errors), ``bs_mix(alpha, beta)`` draws U from Birnbaum-Saunders with
    shape alpha and scale beta, and
    ``gig_mix(kappa, chi, psi)`` from the generalized inverse Gaussian with
    density proportional to u^(kappa-1) exp(-(chi/u + psi u)/2).
    """

    kind: str
    params: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in _ERROR_ARITY:
            raise ValueError(f"unknown error law {self.kind!r}; use one of {sorted(_ERROR_ARITY)}")
        params = tuple(float(p) for p in self.params)
        if len(params) != _ERROR_ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {_ERROR_ARITY[self.kind]} parameter(s)")
        object.__setattr__(self, "params", params)
        if self.kind == "bs_mix" and not (params[0] > 0 and params[1] > 0):
            raise ValueError("bs_mix needs alpha > 0 and beta > 0")
        if self.kind == "gig_mix" and not (params[1] > 0 and params[2] > 0):
            raise ValueError("gig_mix needs chi > 0 and psi > 0")
        if self.model is not None:
            self.model  # validates family parameters through SmnModel

    @property
    def model(self) -> SmnModel | None:
        k, a = self.kind, self.params
        if k == "N":
            return SmnModel.normal()
        if k == "T":
            return SmnModel.student_t(a[0])
        if k == "SL":
            return SmnModel.slash(a[0])
        if k == "CN":
            return SmnModel.contaminated(a[0], a[1])
        return None

    def sample_mixing(self, rng: np.random.Generator, n: int) -> np.ndarray:
        model = self.model
        if model is not None:
            if model.family is Family.N:
                return np.ones(n)
            return sample_mixing(model, n, rng)
        a = self.params
        if self.kind == "laplace_mix":
            return 1.0 / rng.exponential(2.0, size=n)
        if self.kind == "bs_mix":
            alpha, beta = a
            w = 0.5 * alpha * rng.standard_normal(n)
            return beta * (w + np.sqrt(w * w + 1.0)) ** 2
        kappa, chi, psi = a
        return stats.geninvgauss.rvs(kappa, math.sqrt(chi * psi), scale=math.sqrt(chi / psi),
                                     size=n, random_state=rng)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = self.sample_mixing(rng, n)
        return rng.standard_normal(n) / np.sqrt(u)

    def __str__(self):
        return _fmt(self.kind, self.params)


def parse_error_law(text: str | ErrorLaw) -> ErrorLaw:
    if isinstance(text, ErrorLaw):
        return text
    name, vals = _parse_call(text)
    for key in _ERROR_ARITY:
        if key.lower() == name.lower():
            return ErrorLaw(key, vals)
    raise ValueError(f"unknown error law {name!r}")


@dataclass(frozen=True)
class Censoring:
    """``interval(p, c)``, ``left(p)``, ``right(p)`` or ``none``."""

    kind: str = "none"
    p: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "interval", "left", "right"):
            raise ValueError(f"unknown censoring kind {self.kind!r}")
        if self.kind == "interval":
            if not 0 <= self.p < 1:
                raise ValueError("interval censoring needs 0 <= p < 1")
            if not self.c > 0:
                raise ValueError("interval width c must be positive")
        if self.kind in ("left", "right") and not 0 < self.p < 1:
            raise ValueError(f"{self.kind} censoring needs 0 < p < 1")

    def __str__(self):
        if self.kind == "none":
            return "none"
        if self.kind == "interval":
            return _fmt("interval", (self.p, self.c))
        return _fmt(self.kind, (self.p,))


def parse_censoring(text: str | Censoring) -> Censoring:
    if isinstance(text, Censoring):
        return text
    name, vals = _parse_call(text)
    name = name.lower()
    if name == "none":
        return Censoring()
    if name == "interval":
        if len(vals) not in (1, 2):
            raise ValueError("interval censoring takes (p) or (p, c)")
        return Censoring("interval", vals[0], vals[1] if len(vals) == 2 else 1.0)
    if len(vals) != 1:
        raise ValueError(f"{name} censoring takes one parameter (p)")
    return Censoring(name, vals[0])


# -- smooth components ----------------------------------------------------------

_PSI_ARITY = {"zero": 0, "exp3m1": 0, "sinpi": 0, "jump": 1, "coscurve": 0}


def psi_function(tag: str, params: Sequence[float] = ()):
    """Vectorized smooth component by tag.

    zero: 0; exp3m1: exp(z/3) - 1; sinpi: sin(pi z);
    jump(xi): 3 sin(2z) + 10 xi 1{0 < z < 0.1} + xi 1{z > 0.1};
    coscurve: cos(4 pi z) exp(-z^2 / 2).
    """
    if tag not in _PSI_ARITY:
        raise ValueError(f"unknown psi {tag!r}; use one of {sorted(_PSI_ARITY)}")
    if len(params) != _PSI_ARITY[tag]:
        raise ValueError(f"psi {tag} takes {_PSI_ARITY[tag]} parameter(s)")
    if tag == "zero":
        return lambda z: np.zeros(np.shape(z))
    if tag == "exp3m1":
        return lambda z: np.expm1(np.asarray(z, dtype=float) / 3.0)
    if tag == "sinpi":
        return lambda z: np.sin(np.pi * np.asarray(z, dtype=float))
    if tag == "coscurve":
        return lambda z: np.cos(4 * np.pi * np.asarray(z, dtype=float)) * np.exp(-np.asarray(z, dtype=float) ** 2 / 2)
    xi = float(params[0])

    def jump(z):
        z = np.asarray(z, dtype=float)
        return 3 * np.sin(2 * z) + 10 * xi * ((z > 0) & (z < 0.1)) + xi * (z > 0.1)
    return jump


# -- scenario -------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of a simulation study.

    ``beta`` includes the intercept coefficient first when ``intercept`` is
    set; ``covariates`` then lists laws for the remaining columns only.
    ``z_corr = (j, rho)`` draws covariate column ``j`` (0-based, among the
    non-intercept columns) jointly normal with z, both standard, with
    correlation ``rho``; their listed laws are ignored. Noise rows are
    appended after censoring; ``noise_x`` gives their laws for selected
    covariate columns. ``deltas`` lists perturbations of the largest exact
    response, each refitted against the unperturbed fit.
    """

    name: str = "scenario"
    n: int = 100
    beta: tuple[float, ...] = (1.0,)
    intercept: bool = False
    covariates: tuple[Law, ...] = (Law("normal", (0.0, 1.0)),)
    z_law: Law = Law("uniform", (0.0, 1.0))
    z_corr: tuple[int, float] | None = None
    psi: str = "zero"
    psi_params: tuple[float, ...] = ()
    error: ErrorLaw = ErrorLaw("N")
    sigma2: float = 1.0
    censoring: Censoring = Censoring()
    noise_counts: tuple[int, ...] = (0,)
    noise_y: Law = Law("uniform", (-5.0, 5.0))
    noise_x: tuple[tuple[int, Law], ...] = ()
    noise_z: Law = Law("uniform", (-2.0, 8.0))
    deltas: tuple[float, ...] = ()
    reps: int = 1
    seed: int | None = None
    families: tuple[Family, ...] = (Family.N,)
    knot_rule: str | int = "m2"
    placement: str = "ESQ"
    degree: int = 3
    epsilon: float = 1e-5
    k_max: int = 2000

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "covariates", tuple(parse_law(c) for c in self.covariates))
        set_(self, "z_law", parse_law(self.z_law))
        set_(self, "error", parse_error_law(self.error))
        set_(self, "censoring", parse_censoring(self.censoring))
        set_(self, "noise_y", parse_law(self.noise_y))
        set_(self, "noise_z", parse_law(self.noise_z))
        set_(self, "noise_x", tuple((int(j), parse_law(l)) for j, l in self.noise_x))
        set_(self, "beta", tuple(float(b) for b in self.beta))
        set_(self, "psi_params", tuple(float(v) for v in self.psi_params))
        set_(self, "families", tuple(Family(f) for f in self.families))
        set_(self, "noise_counts", tuple(int(c) for c in self.noise_counts))
        set_(self, "deltas", tuple(float(d) for d in self.deltas))
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        ncov = len(self.covariates) + (1 if self.intercept else 0)
        if len(self.beta) != ncov:
            raise ValueError(f"beta has {len(self.beta)} entries but the design has {ncov} columns")
        if self.z_corr is not None:
            j, rho = self.z_corr
            if not 0 <= j < len(self.covariates):
                raise ValueError("z_corr column out of range")
            if not -1 < rho < 1:
                raise ValueError("z_corr rho must be in (-1, 1)")
        if any(c < 0 for c in self.noise_counts) or not self.noise_counts:
            raise ValueError("noise counts must be non-negative and non-empty")
        for j, _ in self.noise_x:
            if not 0 <= j < len(self.covariates):
                raise ValueError("noise_x column out of range")
        if not self.families:
            raise ValueError("at least one family is required")
        psi_function(self.psi, self.psi_params)

    def psi_fn(self):
        return psi_function(self.psi, self.psi_params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["covariates"] = [str(c) for c in self.covariates]
        d["z_law"] = str(self.z_law)
        d["error"] = str(self.error)
        d["censoring"] = str(self.censoring)
        d["noise_y"] = str(self.noise_y)
        d["noise_z"] = str(self.noise_z)
        d["noise_x"] = [[j, str(l)] for j, l in self.noise_x]
        d["families"] = [f.value for f in self.families]
        return d


@dataclass
class Truth:
    """Generating values: coefficients, scale, psi(z_i) and latent y_i."""

    beta: np.ndarray
    sigma2: float
    psi: np.ndarray
    y: np.ndarray
    z: np.ndarray


def gen_regression(spec: ScenarioSpec, rng: np.random.Generator) -> tuple[Dataset, Truth]:
    """Draw an uncensored dataset y = x'beta + psi(z) + sigma eps."""
    n = spec.n
    cols = [law.sample(rng, n) for law in spec.covariates]
    z = spec.z_law.sample(rng, n)
    if spec.z_corr is not None:
        j, rho = spec.z_corr
        g = rng.multivariate_normal([0.0, 0.0], [[1.0, rho], [rho, 1.0]], size=n)
        cols[j], z = g[:, 0], g[:, 1]
    if spec.intercept:
        cols.insert(0, np.ones(n))
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    psi = spec.psi_fn()(z)
    eps = spec.error.sample(rng, n)
    y = X @ np.asarray(spec.beta) + psi + math.sqrt(spec.sigma2) * eps
    ds = dataset_from_arrays(y, y, np.zeros(n, dtype=bool), X, z, intercept=spec.intercept)
    return ds, Truth(np.asarray(spec.beta), spec.sigma2, psi, y.copy(), z.copy())


# -- censoring ------------------------------------------------------------------

def _frac(p) -> Fraction:
    # decimal reading so floor(n p) is exact for p such as 0.29
    return Fraction(repr(float(p)))


def _exact_y(dataset: Dataset) -> np.ndarray:
    return np.asarray(dataset.lower, dtype=float)


def censor_interval(dataset: Dataset, truth: Truth | None, p: float, c: float, rng: np.random.Generator) -> Dataset:
    """Interval-censor floor(n p) + 1 rows drawn without replacement.

    Row i gets C1 = max(y - U1, y + U2 - c) and C2 = min(y + U2, y - U1 + c)
    with U1, U2 ~ U(0, c), so y lies in [C1, C2] and C2 - C1 <= c.
    """
    if not 0 <= p < 1:
        raise ValueError("p must be in [0, 1)")
    if not c > 0:
        raise ValueError("c must be positive")
    n = dataset.n
    nc = math.floor(n * _frac(p)) + 1
    if nc >= n:
        raise ValueError(f"censoring count {nc} must be below n={n}")
    y = truth.y if truth is not None else _exact_y(dataset)
    idx = np.sort(rng.choice(n, size=nc, replace=False))
    u1 = rng.uniform(0, c, size=nc)
    u2 = rng.uniform(0, c, size=nc)
    yi = y[idx]
    lo = np.array(dataset.lower, dtype=float)
    hi = np.array(dataset.upper, dtype=float)
    cens = np.array(dataset.censored, dtype=bool)
    lo[idx] = np.maximum(yi - u1, yi + u2 - c)
    hi[idx] = np.minimum(yi + u2, yi - u1 + c)
    cens[idx] = True
    return dataset.replace(lower=lo, upper=hi, censored=cens)


def _one_sided(dataset: Dataset, threshold, p, side: str) -> Dataset:
    y = _exact_y(dataset)
    exact = ~np.asarray(dataset.censored, dtype=bool)
    if (threshold is None) == (p is None):
        raise ValueError("give exactly one of threshold or p")
    if p is not None:
        if not 0 < p < 1:
            raise ValueError("p must be in (0, 1)")
        ye = np.sort(y[exact])
        k = math.ceil(len(ye) * _frac(p))
        if k < 1 or k > len(ye):
            raise ValueError("p-derived threshold falls outside the data")
        threshold = ye[k - 1] if side == "left" else ye[len(ye) - k]
    threshold = float(threshold)
    if not math.isfinite(threshold):
        raise ValueError("threshold must be finite")
    hit = exact & ((y <= threshold) if side == "left" else (y >= threshold))
    lo = np.array(dataset.lower, dtype=float)
    hi = np.array(dataset.upper, dtype=float)
    cens = np.array(dataset.censored, dtype=bool)
    if side == "left":
        lo[hit], hi[hit] = -np.inf, threshold
    else:
        lo[hit], hi[hit] = threshold, np.inf
    cens[hit] = True
    return dataset.replace(lower=lo, upper=hi, censored=cens)


def censor_left(dataset: Dataset, threshold: float | None = None, p: float | None = None) -> Dataset:
    """Rows with y <= threshold become (-inf, threshold].

    With ``p``, the threshold is the k-th smallest exact response,
    k = ceil(p n), so exactly k rows are censored when responses are
    distinct.
    """
    return _one_sided(dataset, threshold, p, "left")


def censor_right(dataset: Dataset, threshold: float | None = None, p: float | None = None) -> Dataset:
    """Rows with y >= threshold become [threshold, inf); ``p`` picks the
    k-th largest exact response, k = ceil(p n)."""
    return _one_sided(dataset, threshold, p, "right")


def censor(dataset: Dataset, truth: Truth, scheme: Censoring, rng: np.random.Generator) -> Dataset:
    if scheme.kind == "none":
        return dataset
    if scheme.kind == "interval":
        return censor_interval(dataset, truth, scheme.p, scheme.c, rng)
    if scheme.kind == "left":
        return censor_left(dataset, p=scheme.p)
    return censor_right(dataset, p=scheme.p)


# -- contamination ---------------------------------------------------------------

def inject_noise(dataset: Dataset, count: int, rng: np.random.Generator, *, y_law: Law,
                 z_law: Law, x_laws: Mapping[int, Law] | None = None,
                 default_x: Sequence[Law] = ()) -> Dataset:
    """Append ``count`` exact rows with y, z and chosen covariates drawn from
    the given laws.

    ``x_laws`` maps non-intercept column indices to laws; other columns use
    ``default_x`` (their scenario laws). The intercept column is 1.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return dataset
    x_laws = dict(x_laws or {})
    off = 1 if dataset.intercept else 0
    ncov = dataset.p - off
    cols = []
    for j in range(ncov):
        law = x_laws.get(j)
        if law is None:
            if j >= len(default_x):
                raise ValueError(f"no law for covariate column {j}")
            law = default_x[j]
        cols.append(law.sample(rng, count))
    y = y_law.sample(rng, count)
    z = z_law.sample(rng, count)
    if off:
        cols.insert(0, np.ones(count))
    Xn = np.column_stack(cols) if cols else np.empty((count, 0))
    return dataset.replace(
        lower=np.concatenate([dataset.lower, y]), upper=np.concatenate([dataset.upper, y]),
        censored=np.concatenate([dataset.censored, np.zeros(count, dtype=bool)]),
        X=np.vstack([dataset.X, Xn]), z=np.concatenate([dataset.z, z]),
    )


def perturb_max(dataset: Dataset, delta: float) -> Dataset:
    """Replace the largest exact response y_max by y_max - delta."""
    exact = np.flatnonzero(~np.asarray(dataset.censored, dtype=bool))
    if exact.size == 0:
        raise ValueError("no exact rows to perturb")
    if delta == 0:
        return dataset
    i = exact[np.argmax(dataset.lower[exact])]
    lo = np.array(dataset.lower, dtype=float)
    hi = np.array(dataset.upper, dtype=float)
    lo[i] -= delta
    hi[i] = lo[i]
    return dataset.replace(lower=lo, upper=hi)


# -- metrics --------------------------------------------------------------------

def bias_mse(estimates, truth) -> tuple[np.ndarray, np.ndarray]:
    """Per-parameter BIAS and MSE over replications (rows of ``estimates``)."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    tv = np.broadcast_to(np.asarray(truth, dtype=float), est.shape[1:])
    if est.shape[0] == 0:
        raise ValueError("no replications")
    d = est - tv
    r = est.shape[0]
    bias = np.array([math.fsum(d[:, j]) / r for j in range(d.shape[1])])
    mse = np.array([math.fsum(d[:, j] ** 2) / r for j in range(d.shape[1])])
    return bias, mse


def iabias_mise(psi_hats: Sequence, psi_trues: Sequence) -> tuple[float, float]:
    """Mean over replications of mean |psi_hat - psi| and mean (psi_hat - psi)^2."""
    if len(psi_hats) != len(psi_trues) or not psi_hats:
        raise ValueError("psi estimates and truths must align and be non-empty")
    ab, sq = [], []
    for h, t in zip(psi_hats, psi_trues):
        d = np.asarray(h, dtype=float) - np.asarray(t, dtype=float)
        if d.size == 0:
            raise ValueError("empty psi vector")
        ab.append(math.fsum(np.abs(d)) / d.size)
        sq.append(math.fsum(d * d) / d.size)
    return math.fsum(ab) / len(ab), math.fsum(sq) / len(sq)


def mean_absolute_error(imputed: Sequence, actual: Sequence) -> float:
    """sum_j sum_i |yhat_ij - y_ij| over all censored rows of all
    replications, divided by their total count."""
    if len(imputed) != len(actual):
        raise ValueError("imputed and actual values must align")
    num, den = [], 0
    for h, t in zip(imputed, actual):
        h = np.asarray(h, dtype=float)
        t = np.asarray(t, dtype=float)
        if h.shape != t.shape:
            raise ValueError("imputed and actual values must align")
        num.append(math.fsum(np.abs(h - t)))
        den += h.size
    if den == 0:
        return math.nan
    return math.fsum(num) / den


def relative_changes(beta, sigma2, beta_d, sigma2_d, tol: float = 1e-8) -> tuple[list[float], int]:
    """Absolute relative changes |(b_d - b)/b| per coefficient plus the
    scale's; coefficients with |b| < tol are skipped and counted."""
    terms, skipped = [], 0
    for b, bd in zip(np.asarray(beta, dtype=float), np.asarray(beta_d, dtype=float)):
        if abs(b) < tol:
            skipped += 1
            continue
        terms.append(abs((bd - b) / b))
    terms.append(abs((sigma2_d - sigma2) / sigma2))
    return terms, skipped


def mmre(clean: Sequence[tuple], perturbed: Sequence[tuple], tol: float = 1e-8) -> tuple[float, int]:
    """Mean magnitude of relative error between paired (beta, sigma2) fits.

    Returns the mean over all included terms (4R for three coefficients, a
    scale and R replications) and the number of skipped terms.
    """
    if len(clean) != len(perturbed) or not clean:
        raise ValueError("clean and perturbed fits must align and be non-empty")
    terms, skipped = [], 0
    for (b, s2), (bd, s2d) in zip(clean, perturbed):
        t, k = relative_changes(b, s2, bd, s2d, tol)
        terms.extend(t)
        skipped += k
    return math.fsum(terms) / len(terms), skipped


# -- study driver ---------------------------------------------------------------

def _fit_record(fit: FitResult) -> dict:
    nu, gamma = fit.model.params
    return {
        "beta": [float(b) for b in fit.beta], "sigma2": float(fit.sigma2),
        "nu": float(nu) if fit.model.family is not Family.N else None,
        "gamma": float(gamma) if fit.model.family is Family.CN else None,
        "loglik": float(fit.loglik), "aic": float(fit.aic), "bic": float(fit.bic),
        "iterations": int(fit.iterations), "converged": bool(fit.converged),
    }


def _replication_seeds(spec: ScenarioSpec, cell: int, master_seed: int | None):
    if spec.seed is not None:
        root = np.random.SeedSequence(spec.seed)
    else:
        root = np.random.SeedSequence([0 if master_seed is None else int(master_seed), cell])
    return root.spawn(spec.reps)


def run_replication(spec: ScenarioSpec, rep: int, seed_seq: np.random.SeedSequence) -> list[dict]:
    """All fits of one replication: every family on every noise variant
    and every perturbation. Returns one record per fit."""
    from .ecme import EcmeConfig, fit, impute

    # children built from the spawn key so re-running a replication is stable
    s_data, s_cens, s_noise = (np.random.SeedSequence(seed_seq.entropy, spawn_key=seed_seq.spawn_key + (i,))
                               for i in range(3))
    base, truth = gen_regression(spec, np.random.default_rng(s_data))
    base = censor(base, truth, spec.censoring, np.random.default_rng(s_cens))
    cens_rows = np.flatnonzero(base.censored)
    psi_true = truth.psi - truth.psi.mean() if spec.intercept else truth.psi
    records = []
    for count in spec.noise_counts:
        data = inject_noise(base, count, np.random.default_rng(s_noise), y_law=spec.noise_y,
                            z_law=spec.noise_z, x_laws=dict(spec.noise_x), default_x=spec.covariates)
        for fam in spec.families:
            cfg = EcmeConfig(family=fam, knot_rule=spec.knot_rule, placement=spec.placement,
                             degree=spec.degree, epsilon=spec.epsilon, k_max=spec.k_max)
            rec = {"scenario": spec.name, "rep": rep, "family": fam.value, "noise": count, "delta": 0.0}
            try:
                res = fit(data, cfg)
            except Exception as exc:
                rec["error"] = f"{type(exc).__name__}: {exc}"
                records.append(rec)
                continue
            rec.update(_fit_record(res))
            ph = res.psi(truth.z)
            if spec.intercept:
                ph = ph - ph.mean()
            d = ph - psi_true
            rec["iabs"] = math.fsum(np.abs(d)) / d.size
            rec["isq"] = math.fsum(d * d) / d.size
            if cens_rows.size:
                try:
                    yhat = impute(res, data)[cens_rows]
                    rec["abs_err_sum"] = math.fsum(np.abs(yhat - truth.y[cens_rows]))
                    rec["n_cens"] = int(cens_rows.size)
                except Exception as exc:
                    rec["impute_error"] = f"{type(exc).__name__}: {exc}"
            records.append(rec)
            for delta in spec.deltas:
                prec = {"scenario": spec.name, "rep": rep, "family": fam.value, "noise": count,
                        "delta": float(delta)}
                try:
                    pres = fit(perturb_max(data, delta), cfg)
                except Exception as exc:
                    prec["error"] = f"{type(exc).__name__}: {exc}"
                    records.append(prec)
                    continue
                prec.update(_fit_record(pres))
                terms, skipped = relative_changes(res.beta, res.sigma2, pres.beta, pres.sigma2)
                prec["rel_terms"] = terms
                prec["rel_skipped"] = skipped
                records.append(prec)
    return records


def _task(args):
    spec, rep, ss = args
    return run_replication(spec, rep, ss)


def _mean(vals):
    return math.fsum(vals) / len(vals) if vals else math.nan


def _aggregate(spec: ScenarioSpec, records: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = defaultdict(list)
    for r in records:
        groups[(r["family"], r["noise"], r["delta"])].append(r)
    rows = []
    order = {f.value: i for i, f in enumerate(spec.families)}
    for (fam, noise, delta), recs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][2], order[kv[0][0]])):
        ok = [r for r in recs if "error" not in r]
        row = {"scenario": spec.name, "family": fam, "noise": noise, "delta": delta,
               "reps": len(ok), "failures": len(recs) - len(ok),
               "nonconverged": sum(1 for r in ok if not r["converged"])}
        if ok:
            row["mean_loglik"] = _mean([r["loglik"] for r in ok])
            row["mean_aic"] = _mean([r["aic"] for r in ok])
            row["mean_bic"] = _mean([r["bic"] for r in ok])
            if delta == 0:
                bias, mse = bias_mse([r["beta"] for r in ok], spec.beta)
                for j, (b, m) in enumerate(zip(bias, mse)):
                    row[f"bias_beta{j + 1}"] = float(b)
                    row[f"mse_beta{j + 1}"] = float(m)
                b, m = bias_mse([[r["sigma2"]] for r in ok], [spec.sigma2])
                row["bias_sigma2"], row["mse_sigma2"] = float(b[0]), float(m[0])
                row["iabias"] = _mean([r["iabs"] for r in ok])
                row["mise"] = _mean([r["isq"] for r in ok])
                withc = [r for r in ok if "abs_err_sum" in r]
                if withc:
                    row["mae"] = math.fsum(r["abs_err_sum"] for r in withc) / sum(r["n_cens"] for r in withc)
            else:
                terms = [t for r in ok for t in r["rel_terms"]]
                row["mmre"] = math.fsum(terms) / len(terms)
                row["mmre_skipped"] = sum(r["rel_skipped"] for r in ok)
        rows.append(row)
    return rows


@dataclass
class StudyReport:
    """Aggregated rows keyed by (scenario, family, noise, delta), plus the
    per-fit records they were computed from."""

    rows: list[dict]
    records: list[dict]
    seed: int | None
    specs: list[dict] = field(default_factory=list)

    def row(self, scenario: str, family: str, noise: int = 0, delta: float = 0.0) -> dict:
        for r in self.rows:
            if (r["scenario"], r["family"], r["noise"], r["delta"]) == (scenario, family, noise, float(delta)):
                return r
        raise KeyError((scenario, family, noise, delta))

    def failures(self) -> list[dict]:
        return [r for r in self.records if "error" in r]


def run_study(specs: Sequence[ScenarioSpec] | ScenarioSpec, parallel: int = 1,
              master_seed: int | None = None) -> StudyReport:
    """Run every replication of every scenario.

    Seeds: scenario ``k`` uses ``SeedSequence(spec.seed)`` when the spec has
    a seed, else ``SeedSequence([master_seed, k])``; replication ``r`` takes
    the r-th spawned child, which in turn spawns data, censoring and noise
    streams. Results are gathered by index, so the report does not depend on
    ``parallel``.
    """
    if isinstance(specs, ScenarioSpec):
        specs = [specs]
    tasks, owner = [], []
    for k, spec in enumerate(specs):
        for r, ss in enumerate(_replication_seeds(spec, k, master_seed)):
            tasks.append((spec, r, ss))
            owner.append(k)
    if parallel > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * parallel))))
    else:
        results = [_task(t) for t in tasks]
    per_spec: list[list[dict]] = [[] for _ in specs]
    for k, recs in zip(owner, results):
        per_spec[k].extend(recs)
    rows, records = [], []
    for spec, recs in zip(specs, per_spec):
        for r in recs:
            if "error" in r:
                log.warning("%s rep %d %s failed: %s", r["scenario"], r["rep"], r["family"], r["error"])
        rows.extend(_aggregate(spec, recs))
        records.extend(recs)
    return StudyReport(rows, records, master_seed, [s.to_dict() for s in specs])


# -- presets --------------------------------------------------------------------

def preset(design: str, /, **overrides) -> ScenarioSpec:
    """Ready-made study designs.

    recovery: three covariates, psi = exp(z/3) - 1, interval censoring.
    comparison: intercept plus three covariates, psi = sin(pi z), right
    censoring, Laplace-mixture errors.
    imputation: y = 1 + 3 x1 + jump(xi) + eps with (x1, z) correlated
    normals, left censoring and uniform noise rows.
    robustness: intercept, U(2, 20) and Bernoulli(0.6) covariates, psi =
    cos(4 pi z) exp(-z^2/2), interval censoring and perturbed maxima.
    """
    base: dict
    name = design
    if name == "recovery":
        base = dict(n=400, beta=(1, 2, -2), intercept=False,
                    covariates=("normal(0,1)", "bernoulli(0.5)", "uniform(-4,1)"),
                    z_law="uniform(-1,2)", psi="exp3m1", error="T(3)", sigma2=2.0,
                    censoring="interval(0.075,1)", families=("T",))
    elif name == "comparison":
        base = dict(n=400, beta=(1, 2, -2, 1), intercept=True,
                    covariates=("normal(0,1)", "bernoulli(0.5)", "uniform(-2,2)"),
                    z_law="uniform(-1,7)", psi="sinpi", error="laplace_mix", sigma2=2.0,
                    censoring="right(0.15)", families=("N", "T", "SL", "CN"))
    elif name == "imputation":
        base = dict(n=200, beta=(1, 3), intercept=True, covariates=("normal(0,1)",),
                    z_law="normal(0,1)", z_corr=(0, 0.5), psi="jump", psi_params=(0.0,),
                    error="N", sigma2=1.0, censoring="left(0.1)", noise_counts=(0, 20),
                    noise_y="uniform(-5,5)", noise_x=((0, "uniform(-3,2)"),), noise_z="uniform(-2,8)",
                    families=("N", "T", "SL", "CN"))
    elif name == "robustness":
        base = dict(n=300, beta=(1, 4, 2), intercept=True,
                    covariates=("uniform(2,20)", "bernoulli(0.6)"), z_law="uniform(0,3)",
                    psi="coscurve", error="N", sigma2=2.0, censoring="interval(0.1,1)",
                    deltas=(2, 6, 10), families=("N", "T", "SL", "CN"))
    else:
        raise ValueError(f"unknown preset {name!r}; use recovery, comparison, imputation or robustness")
    base["name"] = name
    base.update(overrides)
    return ScenarioSpec(**base)
