import numpy as np
import pytest

from artifact import prng


@pytest.fixture
def key():
    return prng.key_from_seed(1234)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)
