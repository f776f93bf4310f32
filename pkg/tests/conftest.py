import warnings

import numpy as np
import pytest
from hypothesis import settings

from privlr.dataio import Dataset, load_dataset, prepare_split

settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def concrete():
    return load_dataset("concrete")


@pytest.fixture(scope="session")
def concrete_split(concrete):
    train, test, _ = prepare_split(concrete, 0.2, 42)
    return train, test


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_linear(rng, n, d, noise=0.1):
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = X @ w + 0.5 + noise * rng.normal(size=n)
    return Dataset(X, y)


@pytest.fixture(autouse=True)
def _quiet_rank_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="design matrix rank")
        yield
