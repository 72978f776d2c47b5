import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_report import LINES


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # front-load JIT compilation so timed tests measure steady-state runtime
    from iltw import kernels

    kernels.warmup()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
