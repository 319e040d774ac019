import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ymh_lab.grid import TorusGrid

settings.register_profile("ymh", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ymh")


@pytest.fixture
def surface16():
    return TorusGrid(1, 16)


@pytest.fixture
def surface32():
    return TorusGrid(1, 32)


def nrm(psi):
    from ymh_lab.grid import norm_sq

    return float(np.sqrt(norm_sq(psi)))
