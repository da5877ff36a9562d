import pytest

_criteria_lines = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def add(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        _criteria_lines.append(line)
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter):
    if _criteria_lines:
        terminalreporter.section("acceptance criteria")
        for line in _criteria_lines:
            terminalreporter.write_line(line)
