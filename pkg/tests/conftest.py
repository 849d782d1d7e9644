import pytest

_LINES: dict = {}


@pytest.fixture
def criterion():
    """record(label, ok, detail) stores one summary line and returns ok."""

    def record(label: str, ok: bool, detail: str = "") -> bool:
        line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        _LINES[label] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for label in sorted(_LINES):
            terminalreporter.write_line(_LINES[label])
