import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from plrsmn.core import dataset_from_arrays  # noqa: E402

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "plrsmn" / "data"


def make_data(n=200, seed=0, family="T", nu=4.0, censor=0.0, intercept=False, sigma=1.0, beta=(1.0, -0.5)):
    """Small synthetic PLR dataset with optional interval censoring."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(beta)))
    if intercept:
        X[:, 0] = 1.0
    z = rng.uniform(0, 1, n)
    mu = X @ np.asarray(beta) + np.sin(2 * np.pi * z)
    if family == "N":
        e = rng.normal(size=n)
    elif family == "T":
        e = rng.standard_t(nu, n)
    elif family == "SL":
        e = rng.normal(size=n) / np.sqrt(rng.beta(nu, 1, n))
    else:
        e = rng.normal(size=n) / np.sqrt(np.where(rng.random(n) < 0.2, 0.3, 1.0))
    y = mu + sigma * e
    lo, hi = y.copy(), y.copy()
    cens = rng.random(n) < censor
    kind = rng.integers(0, 3, n)
    w = rng.uniform(0.2, 1.5, n)
    off = rng.uniform(0, 1, n)
    for i in np.flatnonzero(cens):
        if kind[i] == 0:
            lo[i], hi[i] = y[i] - off[i] * w[i], y[i] + (1 - off[i]) * w[i]
        elif kind[i] == 1:
            lo[i], hi[i] = -np.inf, y[i] + off[i]
        else:
            lo[i], hi[i] = y[i] - off[i], np.inf
    return dataset_from_arrays(lo, hi, cens, X, z, intercept=intercept)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
