import pytest
from hypothesis import settings

# single-CPU sandboxes make per-example timing meaningless
settings.register_profile("default", deadline=None)
settings.load_profile("default")

# one line per acceptance criterion, filled in by tests/test_acceptance.py
CRITERIA_LINES: dict = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    CRITERIA_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA_LINES):
        terminalreporter.write_line(CRITERIA_LINES[n])
