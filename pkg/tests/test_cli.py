import csv
import json
import subprocess
import sys

import pytest

from conftest import DATA_DIR, make_data
from plrsmn.cli import EXIT_ERROR, EXIT_KMAX, EXIT_OK, main
from plrsmn.io import read_fit, write_dataset

LEFT = str(DATA_DIR / "example_left.csv")
EXACT = str(DATA_DIR / "example_exact.csv")
LEFT_ARGS = ["--data", LEFT, "--lower", "y_lo", "--upper", "y_hi", "--covariates", "x1,x2", "--z", "z",
             "--intercept"]
EXACT_ARGS = ["--data", EXACT, "--response", "y", "--covariates", "x1,x2", "--z", "z"]


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_fit_example(tmp_path, capsys):
    out = tmp_path / "fit.json"
    code = main(["fit", *LEFT_ARGS, "--family", "T", "--knots", "m2", "--placement", "esq", "--seed", "1",
                 "--out", str(out), "--curve", str(tmp_path / "curve.csv")])
    assert code == EXIT_OK and out.exists()
    text = capsys.readouterr().out
    for word in ("family", "loglik", "AIC", "BIC", "iterations", "nu"):
        assert word in text
    assert len(rows(tmp_path / "curve.csv")) == 201
    assert read_fit(out).model.family.value == "T"


def test_fit_errors(tmp_path, capsys):
    assert main(["fit", "--data", str(tmp_path / "nope.csv"), "--response", "y", "--covariates", "x1"]) == EXIT_ERROR
    assert "nope.csv" in capsys.readouterr().err
    assert main(["fit", *EXACT_ARGS, "--knots", "0"]) == EXIT_ERROR
    assert "knots" in capsys.readouterr().err
    assert main(["fit", *EXACT_ARGS, "--no-such-flag"]) == EXIT_ERROR
    assert main(["fit", *EXACT_ARGS, "--family", "X"]) == EXIT_ERROR


def test_fit_k_max_exit(tmp_path):
    assert main(["fit", *LEFT_ARGS, "--family", "T", "--k-max", "2", "--out", str(tmp_path / "f.json")]) == EXIT_KMAX


def test_fit_from_config(tmp_path, monkeypatch):
    cfg = tmp_path / "c.ini"
    cfg.write_text(f"[data]\npath = {LEFT}\nmode = interval\nlower = y_lo\nupper = y_hi\ncovariates = x1, x2\n"
                   "intercept = true\n[model]\nfamily = SL\n")
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "a.json")]) == EXIT_OK
    assert read_fit(tmp_path / "a.json").model.family.value == "SL"
    # flags override the file
    assert main(["fit", "--config", str(cfg), "--family", "N", "--out", str(tmp_path / "b.json")]) == EXIT_OK
    assert read_fit(tmp_path / "b.json").model.family.value == "N"
    monkeypatch.setenv("PLRSMN_CONFIG", str(cfg))
    assert main(["fit", "--out", str(tmp_path / "c.json")]) == EXIT_OK
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "c.json").read_bytes()
    cfg.write_text("[model]\nfamilly = T\n")
    assert main(["fit", "--out", str(tmp_path / "d.json")]) == EXIT_ERROR


def test_select_tables(tmp_path):
    one = tmp_path / "one.csv"
    assert main(["select", *LEFT_ARGS, "--families", "T", "--knots", "m2", "--out", str(one)]) == EXIT_OK
    assert len(rows(one)) == 1
    full = tmp_path / "full.csv"
    assert main(["select", *LEFT_ARGS, "--families", "N,T,SL,CN", "--knots", "m1,m2", "--out", str(full)]) == EXIT_OK
    assert len(rows(full)) == 8
    aic, bic = tmp_path / "aic.csv", tmp_path / "bic.csv"
    assert main(["select", *LEFT_ARGS, "--knots", "m1,m2", "--criterion", "aic", "--out", str(aic)]) == EXIT_OK
    assert main(["select", *LEFT_ARGS, "--knots", "m1,m2", "--criterion", "bic", "--out", str(bic)]) == EXIT_OK

    def key(r):
        return r["family"], r["knot_rule"]

    la = {key(r): r["loglik"] for r in rows(aic)}
    lb = {key(r): r["loglik"] for r in rows(bic)}
    assert la == lb


def test_impute(tmp_path):
    fit_path = tmp_path / "f.json"
    assert main(["fit", *LEFT_ARGS, "--family", "T", "--out", str(fit_path)]) == EXIT_OK
    out = tmp_path / "imp.csv"
    assert main(["impute", *LEFT_ARGS, "--fit", str(fit_path), "--out", str(out)]) == EXIT_OK
    got = rows(out)
    cens = [r for r in got if r["censored"] == "1"]
    assert len(cens) == 87 and all(float(r["imputed"]) <= 0.0 for r in cens)
    assert all(r["imputed"] == r["lower"] for r in got if r["censored"] == "0")

    exact_fit = tmp_path / "e.json"
    assert main(["fit", *EXACT_ARGS, "--out", str(exact_fit)]) == EXIT_OK
    assert main(["impute", *EXACT_ARGS, "--fit", str(exact_fit), "--out", str(tmp_path / "e.csv")]) == EXIT_OK
    ys = [r["y"] for r in rows(EXACT)]
    assert [r["imputed"] for r in rows(tmp_path / "e.csv")] == [repr(float(y)) for y in ys]

    # a fit with a different number of covariates
    assert main(["impute", *EXACT_ARGS[:-4], "--covariates", "x1", "--z", "z", "--fit", str(exact_fit)]) == EXIT_ERROR


def test_simulate(tmp_path):
    study = tmp_path / "s.ini"
    study.write_text("[study.one]\nn = 60\nfamilies = N\n")
    assert main(["simulate", "--study", str(study), "--reps", "1", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert len(rows(tmp_path / "r.csv")) == 1
    a, b = tmp_path / "a", tmp_path / "b"
    for stem in (a, b):
        assert main(["simulate", "--study", "recovery", "--reps", "3", "--seed", "4", "--out", str(stem)]) == EXIT_OK
    assert a.with_suffix(".csv").read_bytes() == b.with_suffix(".csv").read_bytes()
    assert a.with_suffix(".json").read_bytes() == b.with_suffix(".json").read_bytes()
    assert main(["simulate", "--study", "nonsense", "--out", str(tmp_path / "x")]) == EXIT_ERROR


def test_report(tmp_path, capsys):
    assert main(["fit", *EXACT_ARGS, "--out", str(tmp_path / "f.json")]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(tmp_path / "f.json")]) == EXIT_OK
    assert "loglik" in capsys.readouterr().out
    assert main(["simulate", "--study", "recovery", "--reps", "2", "--out", str(tmp_path / "s")]) == EXIT_OK
    assert main(["report", str(tmp_path / "s.json"), "--out", str(tmp_path / "t.csv")]) == EXIT_OK
    assert rows(tmp_path / "t.csv")
    (tmp_path / "junk.json").write_text("[]")
    assert main(["report", str(tmp_path / "junk.json")]) == EXIT_ERROR


def test_module_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "plrsmn", "fit", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for flag in ("--data", "--family", "--knots", "--placement", "--degree", "--seed", "--out", "--config"):
        assert flag in r.stdout
    r = subprocess.run([sys.executable, "-m", "plrsmn", "--bogus"], capture_output=True, text=True)
    assert r.returncode == EXIT_ERROR
