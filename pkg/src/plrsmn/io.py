"""Reading datasets from CSV, writing fits and reports, and the INI-style
configuration format."""

from __future__ import annotations

import configparser
import csv
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .bspline import SplineBasis
from .core import (
    CensoredObservation, Dataset, DatasetValidationError, Family, FitResult, SmnModel, Violation,
    validate_dataset,
)

SCHEMA_VERSION = 1
CURVE_POINTS = 201
INTERCEPT_NAME = "(intercept)"
CONFIG_ENV = "PLRSMN_CONFIG"

__all__ = [
    "ParseError", "ConfigError", "ColumnMap", "read_csv", "write_dataset", "format_float", "parse_float",
    "psi_curve", "fit_to_dict", "fit_from_dict", "write_fit", "read_fit", "write_curve",
    "write_report", "load_config", "CONFIG_SCHEMA", "CONFIG_ENV",
]


class ParseError(ValueError):
    """Malformed input; ``line`` is the 1-based line in the file."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        where = ""
        if path:
            where += f"{path}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.path = path


class ConfigError(ValueError):
    pass


def format_float(v: float) -> str:
    """Shortest round-trip text; infinities as ``inf`` / ``-inf``."""
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return repr(v)


def parse_float(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if t in ("-inf", "-infinity"):
        return -math.inf
    if t == "nan" or not t:
        raise ValueError(f"not a number: {text!r}")
    return float(t)


# -- datasets -------------------------------------------------------------------

@dataclass(frozen=True)
class ColumnMap:
    """How CSV columns map onto a dataset.

    Response modes
    --------------
    ``exact``: ``response`` holds observed values (every row exact).
    ``interval``: ``lower`` and ``upper`` hold the endpoints; equal values
    mean an exact row, an empty lower cell means -inf and an empty upper
    cell +inf.
    ``flag``: ``response`` holds a value and ``flag`` a 0/1 censoring
    indicator; flagged rows are censored at the value on ``bound_side``
    ("left" gives (-inf, y], "right" gives [y, inf)).
    """

    mode: str = "exact"
    response: str | None = "y"
    lower: str | None = None
    upper: str | None = None
    flag: str | None = None
    bound_side: str = "left"
    covariates: tuple[str, ...] = ()
    z: str = "z"
    intercept: bool = False

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.mode not in ("exact", "interval", "flag"):
            raise ValueError(f"unknown response mode {self.mode!r}")
        if self.mode in ("exact", "flag") and not self.response:
            raise ValueError(f"mode {self.mode!r} needs a response column")
        if self.mode == "interval" and not (self.lower and self.upper):
            raise ValueError("interval mode needs lower and upper columns")
        if self.mode == "flag":
            if not self.flag:
                raise ValueError("flag mode needs a flag column")
            if self.bound_side not in ("left", "right"):
                raise ValueError("bound_side must be left or right")
        used = self.response_columns + self.covariates + (self.z,)
        if len(set(used)) != len(used):
            raise ValueError(f"column map names overlap: {used}")

    @property
    def response_columns(self) -> tuple[str, ...]:
        if self.mode == "exact":
            return (self.response,)
        if self.mode == "interval":
            return (self.lower, self.upper)
        return (self.response, self.flag)

    @property
    def response_name(self) -> str:
        if self.mode == "interval":
            lo = self.lower
            return lo[:-3] if lo.endswith("_lo") else lo
        return self.response


def _cell(row: list[str], idx: int, name: str, line: int, path: str) -> str:
    if idx >= len(row):
        raise ParseError(f"missing value for column {name!r}", line, path)
    return row[idx].strip()


def _num(text: str, name: str, line: int, path: str) -> float:
    try:
        return parse_float(text)
    except ValueError:
        raise ParseError(f"column {name!r}: cannot parse {text!r} as a number", line, path) from None


def read_csv(path: str | os.PathLike, column_map: ColumnMap) -> Dataset:
    """Load a dataset; rows are validated together and violations report
    file line numbers."""
    path = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open data file: {exc.strerror}", path=path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file (a header row is required)", 1, path) from None
        missing = [c for c in column_map.response_columns + column_map.covariates + (column_map.z,)
                   if c not in header]
        if missing:
            raise ParseError(f"columns not found in header: {', '.join(missing)}", 1, path)
        pos = {h: i for i, h in enumerate(header)}
        rows: list[CensoredObservation] = []
        lines: list[int] = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            x = [_num(_cell(row, pos[c], c, line, path), c, line, path) for c in column_map.covariates]
            if column_map.intercept:
                x.insert(0, 1.0)
            z = _num(_cell(row, pos[column_map.z], column_map.z, line, path), column_map.z, line, path)
            cm = column_map
            if cm.mode == "exact":
                y = _num(_cell(row, pos[cm.response], cm.response, line, path), cm.response, line, path)
                obs = CensoredObservation.exact(y, x, z)
            elif cm.mode == "interval":
                lo_t = _cell(row, pos[cm.lower], cm.lower, line, path)
                hi_t = _cell(row, pos[cm.upper], cm.upper, line, path)
                lo = -math.inf if lo_t == "" else _num(lo_t, cm.lower, line, path)
                hi = math.inf if hi_t == "" else _num(hi_t, cm.upper, line, path)
                obs = (CensoredObservation.exact(lo, x, z) if lo == hi
                       else CensoredObservation.interval(lo, hi, x, z))
            else:
                y = _num(_cell(row, pos[cm.response], cm.response, line, path), cm.response, line, path)
                ft = _cell(row, pos[cm.flag], cm.flag, line, path)
                if ft not in ("0", "1"):
                    raise ParseError(f"column {cm.flag!r}: censoring flag must be 0 or 1, got {ft!r}", line, path)
                if ft == "0":
                    obs = CensoredObservation.exact(y, x, z)
                elif cm.bound_side == "left":
                    obs = CensoredObservation.interval(-math.inf, y, x, z)
                else:
                    obs = CensoredObservation.interval(y, math.inf, x, z)
            rows.append(obs)
            lines.append(line)
    if not rows:
        raise ParseError("no data rows", path=path)
    names = ((INTERCEPT_NAME,) if column_map.intercept else ()) + column_map.covariates
    try:
        return validate_dataset(rows, names, z_name=column_map.z, response_name=column_map.response_name,
                                intercept=column_map.intercept)
    except DatasetValidationError as exc:
        relabeled = [Violation(lines[v.row] if 0 <= v.row < len(lines) else v.row, v.code, v.message)
                     for v in exc.violations]
        err = DatasetValidationError(relabeled)
        raise ParseError(str(err).replace("row ", "line "), relabeled[0].row, path) from None


def write_dataset(dataset: Dataset, path: str | os.PathLike) -> ColumnMap:
    """Write in interval mode (``<response>_lo``, ``<response>_hi``; exact
    rows repeat the value) and return the matching column map."""
    off = 1 if dataset.intercept else 0
    covs = tuple(dataset.covariate_names[off:])
    resp = dataset.response_name
    cmap = ColumnMap(mode="interval", response=None, lower=f"{resp}_lo", upper=f"{resp}_hi",
                     covariates=covs, z=dataset.z_name, intercept=dataset.intercept)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(covs) + [dataset.z_name, cmap.lower, cmap.upper])
        for i in range(dataset.n):
            w.writerow([format_float(v) for v in dataset.X[i, off:]]
                       + [format_float(dataset.z[i]), format_float(dataset.lower[i]), format_float(dataset.upper[i])])
    return cmap


# -- fits -----------------------------------------------------------------------

def psi_curve(fit: FitResult, points: int = CURVE_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """psi-hat on ``points`` evenly spaced z values across the basis range."""
    a, b = fit.basis.boundary
    z = np.linspace(a, b, points)
    return z, np.asarray(fit.psi(z), dtype=float)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def fit_to_dict(fit: FitResult) -> dict:
    nu, gamma = fit.model.params
    z, psi = psi_curve(fit)
    basis = fit.basis
    return {
        "schema_version": SCHEMA_VERSION,
        "family": fit.model.family.value,
        "nu": nu if fit.model.family is not Family.N else None,
        "gamma": gamma if fit.model.family is Family.CN else None,
        "covariate_names": list(fit.covariate_names),
        "beta": [float(v) for v in fit.beta],
        "alpha": [float(v) for v in fit.alpha],
        "sigma2": float(fit.sigma2),
        "loglik": float(fit.loglik),
        "aic": float(fit.aic),
        "bic": float(fit.bic),
        "n": int(fit.n),
        "n_params": int(fit.n_params),
        "iterations": int(fit.iterations),
        "converged": bool(fit.converged),
        "knot_rule": fit.knot_rule,
        "placement": fit.placement,
        "basis": {
            "degree": basis.degree,
            "interior_knots": [float(k) for k in basis.interior_knots],
            "boundary": [float(basis.boundary[0]), float(basis.boundary[1])],
            "knots": [float(k) for k in basis.knots],
            "centering_offsets": (None if basis.centering_offsets is None
                                  else [float(v) for v in basis.centering_offsets]),
            "collapsed": int(basis.collapsed),
        },
        "loglik_trace": [float(v) for v in fit.loglik_trace],
        "diagnostics": _jsonable(fit.diagnostics),
        "psi_curve": {"z": [float(v) for v in z], "psi": [float(v) for v in psi]},
    }


def fit_from_dict(d: dict) -> FitResult:
    if not isinstance(d, dict):
        raise ParseError("a fit record must be a JSON object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported fit schema version {version!r} (expected {SCHEMA_VERSION})")
    fam = Family(d["family"])
    model = SmnModel(fam, d.get("nu"), d.get("gamma"))
    b = d["basis"]
    basis = SplineBasis(int(b["degree"]), np.asarray(b["interior_knots"], dtype=float), tuple(b["boundary"]),
                        None if b.get("centering_offsets") is None else np.asarray(b["centering_offsets"], dtype=float),
                        int(b.get("collapsed", 0)))
    return FitResult(
        beta=np.asarray(d["beta"], dtype=float), alpha=np.asarray(d["alpha"], dtype=float),
        sigma2=float(d["sigma2"]), model=model, loglik=float(d["loglik"]),
        loglik_trace=[float(v) for v in d.get("loglik_trace", [])], iterations=int(d["iterations"]),
        converged=bool(d["converged"]), basis=basis, aic=float(d["aic"]), bic=float(d["bic"]), n=int(d["n"]),
        covariate_names=tuple(d.get("covariate_names", ())), knot_rule=str(d.get("knot_rule", "")),
        placement=str(d.get("placement", "")), diagnostics=dict(d.get("diagnostics", {})),
    )


def _fit_rows(fit: FitResult) -> list[tuple[str, str, str]]:
    d = fit_to_dict(fit)
    rows: list[tuple[str, str, str]] = [("meta", "schema_version", str(SCHEMA_VERSION)),
                                        ("model", "family", d["family"])]
    if d["nu"] is not None:
        rows.append(("model", "nu", format_float(d["nu"])))
    if d["gamma"] is not None:
        rows.append(("model", "gamma", format_float(d["gamma"])))
    names = d["covariate_names"] or [f"x{j + 1}" for j in range(len(d["beta"]))]
    rows += [("beta", name, format_float(v)) for name, v in zip(names, d["beta"])]
    rows += [("alpha", str(j + 1), format_float(v)) for j, v in enumerate(d["alpha"])]
    rows.append(("scale", "sigma2", format_float(d["sigma2"])))
    rows += [("criteria", "loglik", format_float(d["loglik"])), ("criteria", "aic", format_float(d["aic"])),
             ("criteria", "bic", format_float(d["bic"])), ("criteria", "n_params", str(d["n_params"])),
             ("criteria", "n", str(d["n"]))]
    rows += [("fit", "iterations", str(d["iterations"])), ("fit", "converged", str(d["converged"]).lower()),
             ("fit", "knot_rule", d["knot_rule"]), ("fit", "placement", d["placement"]),
             ("fit", "degree", str(d["basis"]["degree"]))]
    rows += [("knots", str(j + 1), format_float(v)) for j, v in enumerate(d["basis"]["knots"])]
    rows += [("psi_curve", format_float(z), format_float(p))
             for z, p in zip(d["psi_curve"]["z"], d["psi_curve"]["psi"])]
    return rows


def write_fit(fit: FitResult, path: str | os.PathLike, format: str | None = None) -> None:
    """Write a fit as JSON (full record, readable by :func:`read_fit`) or as
    a long-format CSV with ``section,name,value`` rows."""
    path = Path(path)
    fmt = (format or ("csv" if path.suffix.lower() == ".csv" else "json")).lower()
    if fmt == "json":
        text = json.dumps(fit_to_dict(fit), indent=2, allow_nan=True)
        path.write_text(text + "\n", encoding="utf-8")
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["section", "name", "value"])
            w.writerows(_fit_rows(fit))
    else:
        raise ValueError(f"unknown fit format {fmt!r}; use json or csv")


def read_fit(path: str | os.PathLike) -> FitResult:
    path = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open fit file: {exc.strerror}", path=path) from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, path) from None
    try:
        return fit_from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed fit record: {exc}", path=path) from None


def write_curve(fit: FitResult, path: str | os.PathLike, points: int = CURVE_POINTS) -> None:
    z, psi = psi_curve(fit, points)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "psi"])
        w.writerows([format_float(a), format_float(b)] for a, b in zip(z, psi))


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def write_table(rows: Sequence[dict], path: str | os.PathLike) -> None:
    """Rows of dicts to CSV; the header is the union of keys in first-seen order."""
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_csv_value(r.get(c)) for c in cols])


def write_report(report, path: str | os.PathLike) -> list[Path]:
    """Write a study report: ``<stem>.csv`` (aggregates) and ``<stem>.json``
    (aggregates, per-fit records, scenario specs). Returns both paths."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix.lower() in (".csv", ".json") else path
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    write_table(report.rows, csv_path)
    payload = {"schema_version": SCHEMA_VERSION, "seed": report.seed, "scenarios": _jsonable(report.specs),
               "rows": _jsonable(report.rows), "records": _jsonable(report.records)}
    json_path.write_text(json.dumps(payload, indent=1, allow_nan=True) + "\n", encoding="utf-8")
    return [csv_path, json_path]


# -- configuration --------------------------------------------------------------

def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    return int(text.strip())


def _str(text: str) -> str:
    return text.strip()


def _names(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(parse_float(t) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(",") if t.strip())


def _laws(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(";") if t.strip())


def _knot_rule(text: str):
    t = text.strip()
    return t if t in ("m1", "m2") else int(t)


def _knot_rules(text: str):
    return tuple(_knot_rule(t) for t in text.split(",") if t.strip())


def _noise_x(text: str) -> tuple[tuple[int, str], ...]:
    out = []
    for item in _laws(text):
        j, _, law = item.partition(":")
        if not law:
            raise ValueError(f"noise_x entries look like 0:uniform(-3,2), got {item!r}")
        out.append((int(j), law.strip()))
    return tuple(out)


def _pair(text: str):
    j, rho = text.split(",")
    return int(j), float(rho)


CONFIG_SCHEMA: dict[str, dict[str, Any]] = {
    "data": {"path": _str, "mode": _str, "response": _str, "lower": _str, "upper": _str, "flag": _str,
             "bound_side": _str, "covariates": _names, "z": _str, "intercept": _bool},
    "model": {"family": _str, "families": _names, "criterion": _str},
    "knots": {"rule": _knot_rule, "rules": _knot_rules, "placement": _str, "placements": _names, "degree": _int},
    "optimizer": {"epsilon": parse_float, "k_max": _int, "nu_lower": parse_float, "nu_upper": parse_float,
                  "gamma_lower": parse_float, "gamma_upper": parse_float, "seed": _int},
    "study": {"preset": _str, "name": _str, "n": _int, "reps": _int, "seed": _int, "beta": _floats,
              "intercept": _bool, "covariates": _laws, "z_law": _str, "z_corr": _pair, "psi": _str,
              "psi_params": _floats, "error": _str, "sigma2": parse_float, "censoring": _str,
              "noise_counts": _ints, "noise_y": _str, "noise_x": _noise_x, "noise_z": _str,
              "deltas": _floats, "families": _names, "knot_rule": _knot_rule, "placement": _str,
              "degree": _int, "epsilon": parse_float, "k_max": _int},
}


def load_config(path: str | os.PathLike | None = None) -> dict[str, dict[str, Any]]:
    """Parse a configuration file into typed values.

    Sections are ``data``, ``model``, ``knots``, ``optimizer`` and one or more
    study sections (``study`` or ``study.<name>``). Unknown sections or keys
    raise :class:`ConfigError`. With ``path=None`` the file named by the
    ``PLRSMN_CONFIG`` environment variable is read, if set; otherwise an empty
    configuration is returned.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
        if path is None:
            return {}
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot open config file: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        kind = "study" if section == "study" or section.startswith("study.") else section
        schema = CONFIG_SCHEMA.get(kind)
        if schema is None:
            raise ConfigError(f"{path}: unknown section [{section}]; expected one of "
                              f"{', '.join(sorted(CONFIG_SCHEMA))} (or study.<name>)")
        vals: dict[str, Any] = {}
        for key, raw in cp.items(section):
            conv = schema.get(key)
            if conv is None:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]; "
                                  f"valid keys: {', '.join(sorted(schema))}")
            try:
                vals[key] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: [{section}] {key}: {exc}") from None
        if kind == "study" and section.startswith("study.") and "name" not in vals:
            vals["name"] = section.split(".", 1)[1]
        out[section] = vals
    return out
