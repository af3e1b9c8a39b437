import numpy as np
import pytest

from xmem import Disk, DiskConfig

# lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def make_disk(M=256, B=16, enforce=True) -> Disk:
    return Disk(DiskConfig(M, B, enforce))


def keys(values):
    return np.asarray(values, dtype=np.uint64)


@pytest.fixture
def disk():
    return make_disk()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
