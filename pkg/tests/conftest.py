import numpy as np
import pytest

from safeconv.dq_network import DqVector, EquivalentNetwork, FilterLineParams, thevenin_reduce


@pytest.fixture(scope="session")
def bench_filter() -> FilterLineParams:
    """The single-converter bench network (per-unit)."""
    return FilterLineParams(r_f=0.011, l_f=0.016, c_f=0.014, r_g=0.025, l_g=0.021)


@pytest.fixture(scope="session")
def bench_net(bench_filter) -> EquivalentNetwork:
    return thevenin_reduce(bench_filter, DqVector(1.0, 0.0))


def random_network(rng, r_range=(0.0, 0.2), x_range=(-0.2, 0.2), e_range=(0.5, 1.5)):
    """Random equivalent network: resistive-to-capacitive, source off-axis."""
    r = rng.uniform(*r_range)
    x = rng.uniform(*x_range)
    emag = rng.uniform(*e_range)
    ang = rng.uniform(-np.pi, np.pi)
    return EquivalentNetwork(
        r_eq=r, l_eq=x, omega=1.0,
        e_dq=DqVector(emag * np.cos(ang), emag * np.sin(ang)),
    )
