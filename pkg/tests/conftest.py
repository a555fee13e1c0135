import pytest

CRITERIA = {}


@pytest.fixture
def record():
    """Store one verdict line per acceptance criterion."""
    def _record(number, ok, detail):
        CRITERIA[number] = (bool(ok), detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
