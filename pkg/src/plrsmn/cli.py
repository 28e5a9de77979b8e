"""Command-line interface: ``plrsmn {fit,select,impute,simulate,report}``.

Exit codes: 0 success (fit converged), 2 a fit stopped at the iteration cap
without meeting the tolerance, 1 any error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .core import DatasetValidationError, Family, FitResult, ModelError, ZeroMass
from .ecme import EcmeConfig, fit, impute
from .io import (
    CONFIG_ENV, ColumnMap, ConfigError, ParseError, format_float, load_config, read_csv, read_fit,
    write_curve, write_fit, write_report, write_table,
)
from .select import SelectionGrid, select
from .simgen import ScenarioSpec, preset, run_study

log = logging.getLogger("plrsmn")

EXIT_OK, EXIT_ERROR, EXIT_KMAX = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 so that 2 keeps meaning "hit k_max"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _knots_arg(text: str):
    t = text.strip().lower()
    if t in ("m1", "m2"):
        return t
    try:
        k = int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"knots must be m1, m2 or a positive integer, got {text!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError(f"explicit knot count must be >= 1, got {k}")
    return k


def _placement_arg(text: str) -> str:
    t = text.strip().upper()
    if t not in ("ES", "ESQ"):
        raise argparse.ArgumentTypeError(f"placement must be es or esq, got {text!r}")
    return t


def _family_arg(text: str) -> str:
    try:
        return Family(text.strip().upper()).value
    except ValueError:
        raise argparse.ArgumentTypeError(f"family must be one of N, T, SL, CN, got {text!r}") from None


def _families_arg(text: str) -> tuple[str, ...]:
    return tuple(_family_arg(t) for t in text.split(",") if t.strip())


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _add_data_flags(p: argparse.ArgumentParser, required_data: bool = True):
    g = p.add_argument_group("data")
    g.add_argument("--data", required=False, help="input CSV file (header row required)")
    g.add_argument("--response", help="exact response column (or the value column with --flag)")
    g.add_argument("--lower", help="lower endpoint column (interval mode; empty cell = -inf)")
    g.add_argument("--upper", help="upper endpoint column (interval mode; empty cell = +inf)")
    g.add_argument("--flag", help="0/1 censoring indicator column (flag mode)")
    g.add_argument("--bound-side", choices=("left", "right"), help="side of the bound for flagged rows")
    g.add_argument("--covariates", help="comma-separated linear covariate columns")
    g.add_argument("--z", help="column entering the smooth component")
    g.add_argument("--intercept", action=argparse.BooleanOptionalAction, default=None,
                   help="add a constant column to the linear part")


def _add_model_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("model")
    g.add_argument("--knots", type=_knots_arg, help="interior knots: m1, m2 or a count")
    g.add_argument("--placement", type=_placement_arg, help="knot placement: es or esq")
    g.add_argument("--degree", type=int, help="spline degree (default 3)")
    g.add_argument("--epsilon", type=float, help="relative log-likelihood tolerance (default 1e-5)")
    g.add_argument("--k-max", type=_positive_int, help="iteration cap (default 2000)")
    g.add_argument("--seed", type=int, help="seed recorded with the fit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plrsmn", description="Partially linear regression with scale-mixture-of-normal "
                                                "errors and censored responses.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help=f"configuration file (default: ${CONFIG_ENV} if set)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="configuration file")

    p = sub.add_parser("fit", parents=[common], help="fit one model", description="Fit one model by ECME and write the result.")
    _add_data_flags(p)
    p.add_argument("--family", type=_family_arg, help="error family: N, T, SL or CN (default N)")
    _add_model_flags(p)
    p.add_argument("--out", help="output file (.json or .csv)")
    p.add_argument("--format", choices=("json", "csv"), help="output format (default from --out suffix)")
    p.add_argument("--curve", help="also write the psi-hat curve (z, psi) to this CSV")

    p = sub.add_parser("select", parents=[common], help="rank a grid of models", description="Fit a grid of families and knot "
                                                                             "settings and rank by AIC or BIC.")
    _add_data_flags(p)
    p.add_argument("--families", type=_families_arg, help="comma-separated families (default N,T,SL,CN)")
    p.add_argument("--knots", type=lambda s: tuple(_knots_arg(t) for t in s.split(",") if t.strip()),
                   help="comma-separated knot rules or counts (default m2)")
    p.add_argument("--placements", type=lambda s: tuple(_placement_arg(t) for t in s.split(",") if t.strip()),
                   help="comma-separated placements (default esq)")
    p.add_argument("--criterion", type=str.upper, choices=("AIC", "BIC"), help="ranking criterion (default BIC)")
    p.add_argument("--degree", type=int, help="spline degree (default 3)")
    p.add_argument("--epsilon", type=float, help="relative log-likelihood tolerance")
    p.add_argument("--k-max", type=_positive_int, help="iteration cap")
    p.add_argument("--parallel", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--out", help="ranked table CSV")

    p = sub.add_parser("impute", parents=[common], help="impute censored responses", description="Replace censored responses "
                                                                                "by their conditional means.")
    _add_data_flags(p)
    p.add_argument("--fit", required=True, help="fit JSON written by 'plrsmn fit'")
    p.add_argument("--out", help="output CSV (default: standard output)")

    p = sub.add_parser("simulate", parents=[common], help="run a simulation study", description="Run the scenarios of a study "
                                                                               "file or a preset design.")
    p.add_argument("--study", required=True,
                   help="config file with [study] sections, or a preset: recovery, comparison, imputation, robustness")
    p.add_argument("--reps", type=_positive_int, help="replications per scenario (overrides the study)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--parallel", type=_positive_int, default=1, help="worker processes")
    p.add_argument("--out", required=True, help="report path stem; writes <stem>.csv and <stem>.json")

    p = sub.add_parser("report", parents=[common], help="summarize a fit or study file", description="Print a fit or study "
                                                                                    "summary, optionally as CSV.")
    p.add_argument("input", help="fit JSON or study report JSON")
    p.add_argument("--out", help="write the summary table as CSV")
    return parser


# -- helpers --------------------------------------------------------------------

def _config(args) -> dict:
    return load_config(args.config) if args.config else load_config(None)


def _pick(flag, section: dict, key: str, default=None):
    if flag is not None:
        return flag
    return section.get(key, default)


def _column_map(args, cfg: dict) -> tuple[str, ColumnMap]:
    d = cfg.get("data", {})
    path = _pick(args.data, d, "path")
    if not path:
        raise ConfigError("no data file given (use --data or [data] path)")
    flag = _pick(args.flag, d, "flag")
    lower = _pick(args.lower, d, "lower")
    upper = _pick(args.upper, d, "upper")
    mode = d.get("mode")
    if args.flag or args.lower or args.upper:
        mode = None
    if mode is None:
        mode = "flag" if flag else ("interval" if lower or upper else "exact")
    covs = args.covariates.split(",") if args.covariates is not None else d.get("covariates", ())
    cmap = ColumnMap(
        mode=mode, response=_pick(args.response, d, "response", "y"), lower=lower, upper=upper, flag=flag,
        bound_side=_pick(args.bound_side, d, "bound_side", "left"),
        covariates=tuple(c.strip() for c in covs if c.strip()), z=_pick(args.z, d, "z", "z"),
        intercept=bool(_pick(args.intercept, d, "intercept", False)),
    )
    return path, cmap


def _ecme_config(args, cfg: dict, family=None) -> EcmeConfig:
    k, m, o = cfg.get("knots", {}), cfg.get("model", {}), cfg.get("optimizer", {})
    fam = family or m.get("family", "N")
    nu_b = None
    if "nu_lower" in o or "nu_upper" in o:
        from .ecme import DEFAULT_NU_BOUNDS
        lo, hi = DEFAULT_NU_BOUNDS.get(Family(fam), (None, None))
        nu_b = (o.get("nu_lower", lo), o.get("nu_upper", hi))
    g_b = None
    if "gamma_lower" in o or "gamma_upper" in o:
        g_b = (o.get("gamma_lower", 0.01), o.get("gamma_upper", 0.99))
    knots = getattr(args, "knots", None)
    if isinstance(knots, tuple):
        knots = None
    return EcmeConfig(
        family=fam, knot_rule=_pick(knots, k, "rule", "m2"),
        placement=_pick(getattr(args, "placement", None), k, "placement", "ESQ").upper(),
        degree=_pick(args.degree, k, "degree", 3), epsilon=_pick(args.epsilon, o, "epsilon", 1e-5),
        k_max=_pick(args.k_max, o, "k_max", 2000), nu_bounds=nu_b, gamma_bounds=g_b,
        seed=_pick(getattr(args, "seed", None), o, "seed"),
    )


def _summary(res: FitResult) -> str:
    nu, gamma = res.model.params
    lines = [
        f"family      {res.model.family.value}",
        f"loglik      {res.loglik:.6f}",
        f"AIC         {res.aic:.6f}",
        f"BIC         {res.bic:.6f}",
        f"iterations  {res.iterations} ({'converged' if res.converged else 'not converged: ' + res.diagnostics.get('stop_reason', '')})",
    ]
    if res.model.family is not Family.N:
        lines.append(f"nu          {nu:.6g}" + (f"  gamma {gamma:.6g}" if res.model.family is Family.CN else ""))
    lines.append(f"sigma2      {res.sigma2:.6g}")
    for name, b in zip(res.covariate_names, res.beta):
        lines.append(f"  {name:<12s} {b: .6g}")
    if res.diagnostics.get("nu_at_bound"):
        lines.append("note: mixing parameter ended at a search bound")
    if res.diagnostics.get("zero_mass_rows"):
        lines.append(f"note: {len(res.diagnostics['zero_mass_rows'])} censored row(s) had degenerate interval mass")
    return "\n".join(lines)


# -- commands -------------------------------------------------------------------

def cmd_fit(args) -> int:
    cfg = _config(args)
    config = _ecme_config(args, cfg, args.family)
    path, cmap = _column_map(args, cfg)
    data = read_csv(path, cmap)
    res = fit(data, config)
    if args.out:
        write_fit(res, args.out, args.format)
    if args.curve:
        write_curve(res, args.curve)
    print(_summary(res))
    return EXIT_OK if res.converged else EXIT_KMAX


def _selection_rows(selection) -> list[dict]:
    rows = []
    for rank, f in enumerate(selection.ranked, 1):
        nu, gamma = f.model.params
        rows.append({
            "rank": rank, "family": f.model.family.value, "knot_rule": f.knot_rule, "placement": f.placement,
            "m": f.basis.m, "loglik": f.loglik, "aic": f.aic, "bic": f.bic, "n_params": f.n_params,
            "nu": nu if f.model.family is not Family.N else None,
            "gamma": gamma if f.model.family is Family.CN else None,
            "iterations": f.iterations, "converged": f.converged,
        })
    return rows


def cmd_select(args) -> int:
    cfg = _config(args)
    m, k = cfg.get("model", {}), cfg.get("knots", {})
    grid = SelectionGrid(
        families=_pick(args.families, m, "families", ("N", "T", "SL", "CN")),
        knot_rules=_pick(args.knots, k, "rules", (k["rule"],) if "rule" in k else ("m2",)),
        placements=_pick(args.placements, k, "placements", (k["placement"],) if "placement" in k else ("ESQ",)),
        criterion=_pick(args.criterion, m, "criterion", "BIC"),
    )
    path, cmap = _column_map(args, cfg)
    data = read_csv(path, cmap)
    base = _ecme_config(args, cfg, grid.families[0])
    selection = select(data, grid, base, parallel=args.parallel)
    rows = _selection_rows(selection)
    if args.out:
        write_table(rows, args.out)
    header = f"{'rank':>4} {'family':<6} {'knots':<5} {'place':<5} {'loglik':>14} {'AIC':>14} {'BIC':>14}"
    print(header)
    for r in rows:
        print(f"{r['rank']:>4} {r['family']:<6} {r['knot_rule']:<5} {r['placement']:<5} "
              f"{r['loglik']:>14.4f} {r['aic']:>14.4f} {r['bic']:>14.4f}")
    for fl in selection.failures:
        print(f"failed: {fl.family.value} {fl.knot_rule} {fl.placement}: {fl.error}", file=sys.stderr)
    return EXIT_OK if all(f.converged for f in selection.ranked) else EXIT_KMAX


def cmd_impute(args) -> int:
    cfg = _config(args)
    path, cmap = _column_map(args, cfg)
    data = read_csv(path, cmap)
    res = read_fit(args.fit)
    if data.p != res.beta.size:
        raise ModelError(f"fit has {res.beta.size} linear coefficients but the data have {data.p} columns")
    values = impute(res, data)
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "lower", "upper", "censored", "imputed"])
        for i in range(data.n):
            w.writerow([i + 1, format_float(data.lower[i]), format_float(data.upper[i]),
                        int(bool(data.censored[i])), format_float(values[i])])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


_PRESETS = ("recovery", "comparison", "imputation", "robustness")


def _study_specs(study: str, reps: int | None) -> list[ScenarioSpec]:
    over = {"reps": reps} if reps else {}
    if study in _PRESETS:
        return [preset(study, **over)]
    cfg = load_config(study)
    sections = [(name, vals) for name, vals in cfg.items() if name == "study" or name.startswith("study.")]
    if not sections:
        raise ConfigError(f"{study}: no [study] section found")
    specs = []
    for name, vals in sections:
        vals = dict(vals)
        base = vals.pop("preset", None)
        if "name" not in vals:
            vals["name"] = base or name
        vals.update(over)
        specs.append(preset(base, **vals) if base else ScenarioSpec(**vals))
    return specs


def cmd_simulate(args) -> int:
    specs = _study_specs(args.study, args.reps)
    seed = 0 if args.seed is None else args.seed
    report = run_study(specs, parallel=args.parallel, master_seed=seed)
    paths = write_report(report, args.out)
    _print_rows(report.rows)
    fails = report.failures()
    if fails:
        print(f"{len(fails)} fit(s) failed; see {paths[1]}", file=sys.stderr)
    nonconv = sum(1 for r in report.records if "error" not in r and not r["converged"])
    return EXIT_KMAX if nonconv else EXIT_OK


_SHOW = ("scenario", "family", "noise", "delta", "reps", "mean_bic", "bias_beta1", "mise", "mae", "mmre")


def _print_rows(rows):
    cols = [c for c in _SHOW if any(c in r for r in rows)]
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append(f"{v:>12.5g}" if isinstance(v, float) else f"{'' if v is None else v!s:>12}")
        print("  ".join(cells))


def cmd_report(args) -> int:
    try:
        d = json.loads(Path(args.input).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot open {args.input}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, args.input) from None
    if "rows" in d and "records" in d:
        _print_rows(d["rows"])
        if args.out:
            write_table(d["rows"], args.out)
        return EXIT_OK
    res = read_fit(args.input)
    print(_summary(res))
    if args.out:
        write_fit(res, args.out, "csv")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "impute": cmd_impute, "simulate": cmd_simulate,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ConfigError, DatasetValidationError, ModelError, ZeroMass, ValueError,
            RuntimeError, OSError) as exc:
        print(f"plrsmn {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR

