import numpy as np
import pytest

from tvwsim.radio_env import PropagationConfig, china_tv_grid


@pytest.fixture(scope="session")
def grid():
    return china_tv_grid()


@pytest.fixture()
def prop():
    return PropagationConfig()


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
