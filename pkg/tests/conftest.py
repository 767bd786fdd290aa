import numpy as np
import pytest

from rska.problems import generate_gaussian


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem():
    return generate_gaussian(30, 12, 4, seed=3)


@pytest.fixture
def tall_problem():
    return generate_gaussian(8, 5, 5, seed=1)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
