import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hamesc.symbols import (Gaussian, PhasePoint, bump_metric_kg, make_free, make_klein_gordon,
                            minkowski_inverse)

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def free2():
    return make_free(2)


@pytest.fixture(scope="session")
def mink2():
    return make_klein_gordon(minkowski_inverse(2))


@pytest.fixture(scope="session")
def mink3():
    return make_klein_gordon(minkowski_inverse(3))


@pytest.fixture(scope="session")
def bump():
    return bump_metric_kg(amplitude=0.1, mu=1.0)


@pytest.fixture(scope="session")
def potential_bump():
    return make_klein_gordon(minkowski_inverse(2), V=Gaussian(1.0, 1.0))


@pytest.fixture(scope="session")
def symbols_2d(free2, mink2, bump):
    return {"free": free2, "minkowski": mink2, "bump": bump}


def pt(x, xi):
    return PhasePoint(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
