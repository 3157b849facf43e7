import numpy as np
import pytest

from fsmi.sensor import SensorModel, build_tables


@pytest.fixture(scope="session")
def sensor():
    return SensorModel()


@pytest.fixture(scope="session")
def tables(sensor):
    return build_tables(sensor)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
