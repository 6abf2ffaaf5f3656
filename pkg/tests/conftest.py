import pytest

_LINES = []


@pytest.fixture
def report():
    """``report(label, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary."""

    def emit(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        print(line)
        _LINES.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
