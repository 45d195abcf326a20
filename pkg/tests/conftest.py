import math

import pytest
from hypothesis import settings

from impacteq import solve
from impacteq.model import TargetPair, deviations, twap_example_spec

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("stress", deadline=None, max_examples=1000)
settings.load_profile("default")

LAM = 0.05
TAU_EXAMPLE = 1.0 - math.sqrt(0.08)  # T - tau = sqrt(2 lam / A1) for A1 = 1.25, c1 = 0


@pytest.fixture(scope="session")
def spec():
    return twap_example_spec()


@pytest.fixture(scope="session")
def quiet_spec():
    return twap_example_spec(sigma=0.0)


@pytest.fixture(scope="session")
def dev():
    return deviations(TargetPair(52.5, 50.0))


@pytest.fixture(scope="session")
def zero_dev():
    return deviations(TargetPair(50.0, 50.0))


@pytest.fixture(scope="session")
def sol(spec, dev):
    return solve(spec, dev, LAM)


@pytest.fixture(scope="session")
def no_trade_sol(spec, dev):
    return solve(spec, dev, 1.0)
