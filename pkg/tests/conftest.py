import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "pathqv",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("pathqv")


@pytest.fixture(scope="session")
def bm14_batch():
    """100 Brownian paths on the 2^14 grid, shared across Monte Carlo tests."""
    import pathqv as pq

    return [pq.gen_brownian(seed, 14, 1.0) for seed in range(100)]
