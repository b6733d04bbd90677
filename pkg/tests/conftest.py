import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    def record(number: int, title: str, passed: bool, detail: str):
        ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2} {title}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
