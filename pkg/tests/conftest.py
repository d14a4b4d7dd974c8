import math

import numpy as np
import pytest


def binomial_z(errors: int, trials: int, p: float) -> float:
    """Standardized distance of an error count from a binomial expectation."""
    return (errors - trials * p) / math.sqrt(trials * p * (1.0 - p))


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
