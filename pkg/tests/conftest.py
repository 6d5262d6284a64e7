import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

GOLDEN = Path(__file__).parent / "golden"

# criterion lines recorded by test_acceptance.py, printed at the end of every session
ACCEPTANCE_LINES = []


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((number, f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {name}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture
def golden():
    return lambda name: (GOLDEN / name).read_bytes()
