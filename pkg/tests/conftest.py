import numpy as np
import pytest

from hierprob.hierarchy import build_summing_matrix, fig1_hierarchy


@pytest.fixture
def fig1():
    return fig1_hierarchy()


@pytest.fixture
def S1(fig1):
    return build_summing_matrix(fig1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
