import numpy as np
import pytest

from unmixlab.simulate import synth_endmembers


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def em3():
    """Three synthetic endmembers on the standard 256-band grid."""
    return synth_endmembers(3, 256, seed=11)


@pytest.fixture(scope="session")
def em4():
    return synth_endmembers(4, 256, seed=7)


def random_simplex(rng, count, n=1):
    """Dirichlet draws; rows sum to one exactly enough for test use."""
    out = rng.dirichlet(np.ones(count), size=n)
    return out[0] if n == 1 else out
