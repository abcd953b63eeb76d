import numpy as np
import pytest

from ltrc_ustat import validate_sample

ACCEPTANCE_LINES = []


@pytest.fixture
def three_point():
    # {(0,1,failure), (0,2,censored), (0,3,failure)}
    return validate_sample([(0, 1, 1, 1), (0, 2, 0), (0, 3, 1, 2)])


@pytest.fixture
def late_entry():
    return validate_sample([(1.5, 2, 0), (0, 1, 1, 1), (0, 3, 1, 2)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
