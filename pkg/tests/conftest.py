import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from loanboost.dataset import Dataset, join_and_engineer  # noqa: E402
from loanboost.synth import REFERENCE_DATE, SynthConfig, synth_generate  # noqa: E402

# planted fixture: seed 7, 2000 loan rows
FIXTURE_CONFIG = SynthConfig(seed=7, n_demographic=2000, n_performance=2000, n_previous=8000)


@pytest.fixture(scope="session")
def planted_tables():
    return synth_generate(FIXTURE_CONFIG)


@pytest.fixture(scope="session")
def planted(planted_tables):
    return join_and_engineer(*planted_tables, REFERENCE_DATE)


@pytest.fixture
def four_rows():
    return Dataset(("x",), np.array([[1.0], [2.0], [3.0], [4.0]]), np.array([0, 0, 1, 1]))


def random_dataset(rng, n, p, missing=0.0, n_levels=None):
    X = rng.normal(size=(n, p))
    if n_levels:
        X = np.round(X * n_levels) / n_levels
    if missing:
        X[rng.random((n, p)) < missing] = np.nan
    logit = np.nan_to_num(X[:, 0]) - 0.5 * np.nan_to_num(X[:, -1])
    y = (rng.random(n) < 1 / (1 + np.exp(-2 * logit))).astype(int)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return Dataset(tuple(f"f{j}" for j in range(p)), X, y)
