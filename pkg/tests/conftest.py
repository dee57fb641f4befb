import pytest

from bbm_lowmax import fkpp

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def sol40():
    """Default-grid FKPP solution to t = 40, wide enough for alpha >= -1.5."""
    return fkpp.solve(fkpp.FkppConfig.default(40.0, -1.5))


@pytest.fixture(scope="session")
def sol10():
    return fkpp.solve(fkpp.FkppConfig.default(10.0, -1.0))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
