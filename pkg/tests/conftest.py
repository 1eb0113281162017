import numpy as np
import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def criterion():
    """Record one acceptance line; call before asserting so failures show too."""
    def record(number, name, passed, detail):
        ACCEPTANCE_LINES.append((number, name, bool(passed), detail))
        print(f"[{'PASS' if passed else 'FAIL'}] {number}. {name}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {name}: {detail}")
