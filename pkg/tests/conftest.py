import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

KINDS = ("tv", "kl", "rkl", "gan")
VARIANTS = ("reparameterized", "original", "swapped")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
