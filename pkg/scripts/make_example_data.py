"""Regenerate the example CSV files bundled under src/plrsmn/data."""

from pathlib import Path

import numpy as np

from plrsmn.io import format_float

OUT = Path(__file__).resolve().parents[1] / "src" / "plrsmn" / "data"


def _write(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(r) + "\n")


def main():
    rng = np.random.default_rng(20240611)
    n = 200

    # exact responses, t(4) errors
    x1, x2 = rng.normal(size=n), rng.uniform(-1, 1, n)
    z = rng.uniform(0, 1, n)
    y = x1 + 2 * x2 + np.sin(2 * np.pi * z) + rng.standard_t(4, n)
    _write(OUT / "example_exact.csv", ["y", "x1", "x2", "z"],
           [[format_float(round(v, 6)) for v in row] for row in zip(y, x1, x2, z)])

    # interval-censored: about 30% of rows reported as a bracket around y
    x1, x2 = rng.normal(size=n), rng.normal(size=n)
    z = rng.uniform(0, 1, n)
    y = np.round(x1 - x2 + np.exp(z) + np.sqrt(2) * rng.standard_t(3, n), 6)
    cens = rng.random(n) < 0.3
    rows = []
    for i in range(n):
        lo = hi = y[i]
        if cens[i]:
            w = rng.uniform(0.2, 1.0)
            lo = round(y[i] - rng.uniform(0, w), 6)
            hi = round(lo + w, 6)
        rows.append([format_float(lo), format_float(hi)] + [format_float(round(v, 6)) for v in (x1[i], x2[i], z[i])])
    _write(OUT / "example_interval.csv", ["y_lo", "y_hi", "x1", "x2", "z"], rows)

    # left-censored at 0: empty lower bound means -inf
    x1 = rng.uniform(0, 4, n)
    x2 = (rng.random(n) < 0.5).astype(float)
    z = rng.uniform(-1, 1, n)
    ystar = -1.0 + 0.8 * x1 - x2 + np.cos(np.pi * z) + rng.standard_t(4, n)
    rows = []
    for i in range(n):
        if ystar[i] <= 0:
            lo, hi = "", "0"
        else:
            lo = hi = format_float(round(ystar[i], 6))
        rows.append([lo, hi, format_float(round(x1[i], 6)), format_float(x2[i]), format_float(round(z[i], 6))])
    _write(OUT / "example_left.csv", ["y_lo", "y_hi", "x1", "x2", "z"], rows)


if __name__ == "__main__":
    main()
