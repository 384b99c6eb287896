import numpy as np
import pytest

from stein_gauge.targets import GaussianTarget, LogisticTarget


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_logistic():
    """sigma2 = 1 posterior with a single datapoint v = 1, y = 1."""
    return LogisticTarget(sigma2=1.0, covariates=[[1.0]], labels=[1.0])


@pytest.fixture
def std_normal():
    return GaussianTarget.isotropic(1, 1.0)


ACCEPTANCE_LINES = []


def record_criterion(label: str, ok: bool, detail: str) -> None:
    """Store and print one acceptance line; the terminal summary repeats them."""
    line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
