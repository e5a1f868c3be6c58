import pytest

# (criterion number, passed, detail) appended by test_acceptance.py
ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
