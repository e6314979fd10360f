import numpy as np
import pytest

from jackson_dynamics.network import two_queue_family

# acceptance verdicts collected by tests/test_acceptance.py
VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def family():
    return two_queue_family


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        ok, detail = VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
