import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from zenosim.grid import Grid
from zenosim.units import PhysicalParams

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def small_grid():
    # same 6.25 nm spacing as the default grid, a quarter of the length
    return Grid(-3.2, 3.2, 1024)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
