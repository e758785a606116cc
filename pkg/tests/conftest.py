import pytest

from pmnl.geometry import Interval
from pmnl.model import ConstantKernel, ConstantValue, ProblemSpec


def make_spec(mu=2, nu=4, a=1, l=2, k0=1.0, u0=1.0, domain=None, horizon=1.0, kernel=None, initial=None):
    return ProblemSpec(mu, nu, a, l,
                       kernel if kernel is not None else ConstantKernel(k0),
                       domain if domain is not None else Interval(0.0, 1.0),
                       initial if initial is not None else ConstantValue(u0),
                       horizon)


@pytest.fixture
def spec_factory():
    return make_spec
