import pytest

from tests import regimes

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def slow_params():
    return regimes.make_params("slow")


@pytest.fixture(scope="session")
def grid101():
    return regimes.make_grid(101)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
