import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fmf.synthetic import SyntheticSpec, generate_synthetic

settings.register_profile("fmf", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fmf"))


@pytest.fixture(scope="session")
def small_dataset():
    """Eight consumers over six weeks; small enough for every test to retrain."""
    return generate_synthetic(SyntheticSpec(n_consumers=8, n_hours=24 * 42, seed=3))


@pytest.fixture(scope="session")
def year_dataset():
    return generate_synthetic(SyntheticSpec(n_consumers=12, n_hours=24 * 400, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
