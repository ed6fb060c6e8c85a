import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from neurospell.channel import synthetic_confusion, truncate_topk

settings.register_profile(
    "default",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def channel_k3():
    """Synthetic confusion model (diagonal 0.6) truncated to top-3."""
    return truncate_topk(synthetic_confusion(0.6), 3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
