import functools

import numpy as np
import pytest

from qnls.scenarios import run_scenario


@functools.lru_cache(maxsize=None)
def scenario(name):
    """Each pinned scenario runs at most once per session."""
    return run_scenario(name)


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    """Remember one acceptance verdict; all are echoed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES, key=lambda x: x[0]):
        terminalreporter.write_line(line)
