import numpy as np
import pytest

from multiscale_gjn.network_model import random_network


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


@pytest.fixture
def random_specs(rng):
    return [random_network(rng, int(rng.integers(1, 9))) for _ in range(30)]
