import os

import pytest
from hypothesis import HealthCheck, settings

from percolab import kernels

settings.register_profile(
    "percolab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "percolab"))

BACKENDS = ["numba", "numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per kernel backend."""
    prev = kernels.use(request.param)
    yield request.param
    kernels.use(prev)
