import pytest

from bubblefd.experiments import run_table, table_spec
from bubblefd.models import make_cev, make_log_power, make_qnv

ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    ACCEPTANCE_LINES.append(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cev():
    return make_cev(0.5, 1.0)


@pytest.fixture(scope="session")
def qnv():
    return make_qnv(1.0, -1.0)


@pytest.fixture(scope="session")
def log_power_1():
    return make_log_power(1.0)


@pytest.fixture(scope="session")
def log_power_01():
    return make_log_power(0.1)


@pytest.fixture(scope="session")
def tables():
    """Rows of all three comparison tables, keyed by table id."""
    return {k: run_table(table_spec(k))[0] for k in (1, 2, 3)}
