import numpy as np
import pytest

from qedadmit import revenue


@pytest.fixture(scope="session")
def exp51():
    return revenue.exponential(5.0, 1.0)


@pytest.fixture(scope="session")
def exp11():
    return revenue.exponential(1.0, 1.0)


@pytest.fixture(scope="session")
def lin11():
    return revenue.linear(1.0, 1.0)


@pytest.fixture(scope="session")
def flat_left():
    """``r_L = 1`` with an exponential right half: the degenerate case."""
    return revenue.exponential(0.0, 1.0)


def constant_profile():
    """``r = 1`` everywhere."""
    return revenue.custom(lambda x: 1.0, lambda x: 1.0,
                          r_right_derivative=lambda x: 0.0, check=False)


def gamma_grid_no_zero():
    """101 points on [-5, 5] skipping zero."""
    g = np.linspace(-5.0, 5.0, 102)
    assert not np.any(g == 0.0)
    return g[g != 0.0][:101]


_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(label: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
