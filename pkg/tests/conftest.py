import numpy as np
import pytest

from nullwave.algebra import example_system
from nullwave.profiles import WaveProfile


@pytest.fixture(scope="session")
def sys1():
    return example_system("example1")


@pytest.fixture(scope="session")
def sys2():
    return example_system("example2")


@pytest.fixture(scope="session")
def sys_scalar():
    return example_system("nirenberg")


@pytest.fixture(scope="session")
def profile2():
    """Two-component profile with only the second component active."""
    return WaveProfile([0.0, 1.0])


@pytest.fixture(scope="session")
def unit_bump():
    return WaveProfile([1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
