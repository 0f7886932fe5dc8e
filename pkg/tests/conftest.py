import numpy as np
import pytest

from euler_shell.background import solve_transonic_background, subsonic_from_mach

GAMMA = 1.4


@pytest.fixture(scope="session")
def sub_branch():
    return subsonic_from_mach(GAMMA, 0.9, 1.0, 1.05)


@pytest.fixture(scope="session")
def tb():
    return solve_transonic_background(GAMMA, 1.1, 1.0, 1.0, 0.6, 1.0, 1.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
