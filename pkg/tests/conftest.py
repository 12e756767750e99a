import pytest

from cylsde.noise import TimeGrid


@pytest.fixture
def grid():
    return TimeGrid.from_horizon(1.0, 1e-3)


@pytest.fixture
def coarse_grid():
    return TimeGrid.from_horizon(1.0, 1e-2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
