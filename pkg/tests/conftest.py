import numpy as np
import pytest

from mklnet.kernels import SpectralKernel


@pytest.fixture
def kernel():
    return SpectralKernel(s=0.5, K=64)


@pytest.fixture
def rng():
    return np.random.default_rng(20131)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(LINES, key=lambda k: int(k)):
        terminalreporter.write_line(LINES[key])
