import numpy as np
import pytest

from missbias.dgp import Band, NoCensoring, Threshold, Truth, apply_censoring, generate_complete
from missbias.stochastic import RngStream

REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[REPORT_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(REPORT_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)


@pytest.fixture
def report(request):
    """Record one pass/fail line for the acceptance summary (and print it)."""

    def _report(number: int, passed: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        request.config.stash[REPORT_KEY].append(line)

    return _report


@pytest.fixture
def rng():
    return RngStream(12345, 7)


def make_data(n=200, mechanism=None, seed=0, truth=None):
    data = generate_complete(n, truth or Truth(), RngStream(seed, 0))
    return apply_censoring(data, mechanism or NoCensoring())


@pytest.fixture
def threshold_data():
    return make_data(300, Threshold(), seed=3)


@pytest.fixture
def band_data():
    return make_data(300, Band(invert=True), seed=4)


@pytest.fixture
def small_design():
    g = np.random.default_rng(99)
    X = g.standard_normal((6, 2))
    y = X @ np.array([0.5, -1.0]) + g.standard_normal(6)
    return X, y
