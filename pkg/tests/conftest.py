import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# (criterion, label, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, label, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda line: line[:2]):
        terminalreporter.write_line(f"criterion {label:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
