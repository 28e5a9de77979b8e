"""Time the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--n 4000] [--repeat 20] [--fits]

Per-kernel timings are measured in-process. With ``--fits`` a full ECME fit
per family is also timed in a subprocess for each backend (the backend is
chosen at import, so it cannot be swapped inside one interpreter).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from plrsmn.core import Family
from plrsmn.kernels import get_backend

CODES = {Family.N: 0, Family.T: 1, Family.SL: 2, Family.CN: 3}
PARAMS = {Family.N: (0.0, 1.0), Family.T: (4.0, 1.0), Family.SL: (2.0, 1.0), Family.CN: (0.2, 0.3)}

FIT_SNIPPET = """
import time, numpy as np
from plrsmn.ecme import EcmeConfig, fit
from plrsmn.simgen import preset, gen_regression, censor
spec = preset("recovery", n={n})
rng = np.random.default_rng(3)
data, truth = gen_regression(spec, rng)
data = censor(data, truth, spec.censoring, rng)
for fam in ("N", "T", "SL", "CN"):
    t0 = time.perf_counter()
    for _ in range({reps}):
        res = fit(data, EcmeConfig(family=fam))
    print(fam, (time.perf_counter() - t0) / {reps}, res.iterations)
"""


def kernel_table(n: int, repeat: int):
    rng = np.random.default_rng(1)
    t = rng.standard_t(4, n)
    a = rng.normal(size=n) - 0.5
    b = a + rng.uniform(0.1, 2.0, n)
    b[: n // 4] = np.inf
    a[n // 4: n // 2] = -np.inf
    py, cy = get_backend("python"), get_backend("cython")
    rows = []
    for fam, code in CODES.items():
        nu, gamma = PARAMS[fam]
        calls = {
            "loglik_sum": lambda m: m.loglik_sum(code, nu, gamma, t, a, b),
            "estep_exact": lambda m: m.estep_exact(code, nu, gamma, t),
            "estep_censored": lambda m: m.estep_censored(code, nu, gamma, a, b),
        }
        for name, call in calls.items():
            tp = min(timeit.repeat(lambda: call(py), number=1, repeat=repeat))
            tc = min(timeit.repeat(lambda: call(cy), number=1, repeat=repeat))
            rows.append((fam.value, name, tp, tc))
    return rows


def fit_times(n: int, reps: int):
    out = {}
    for backend, flag in (("python", "1"), ("cython", "0")):
        env = dict(os.environ, PLRSMN_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", FIT_SNIPPET.format(n=n, reps=reps)],
                             env=env, capture_output=True, text=True, check=True)
        for line in res.stdout.split("\n"):
            if line.strip():
                fam, sec, it = line.split()
                out[(fam, backend)] = (float(sec), int(it))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=4000, help="rows per kernel call")
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--fits", action="store_true", help="also time full fits per backend")
    ap.add_argument("--fit-n", type=int, default=400)
    args = ap.parse_args(argv)
    try:
        get_backend("cython")
    except ImportError:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")

    print(f"kernel timings, n = {args.n} (best of {args.repeat})")
    print(f"{'family':<7}{'kernel':<16}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for fam, name, tp, tc in kernel_table(args.n, args.repeat):
        print(f"{fam:<7}{name:<16}{tp * 1e3:>10.3f}{tc * 1e3:>11.3f}{tp / tc:>9.1f}")
    if args.fits:
        print(f"\nfull fit, recovery design n = {args.fit_n}")
        print(f"{'family':<7}{'numpy s':>10}{'cython s':>10}{'speedup':>9}{'iters':>7}")
        t = fit_times(args.fit_n, 3)
        for fam in ("N", "T", "SL", "CN"):
            tp, it = t[(fam, "python")]
            tc, _ = t[(fam, "cython")]
            print(f"{fam:<7}{tp:>10.4f}{tc:>10.4f}{tp / tc:>9.1f}{it:>7}")


if __name__ == "__main__":
    main()
