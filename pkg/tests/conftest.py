import numpy as np
import pytest
from hypothesis import settings

from kskit import Grid

settings.register_profile("kskit", deadline=None, max_examples=60)
settings.load_profile("kskit")


@pytest.fixture
def grid16():
    return Grid.square(16)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
