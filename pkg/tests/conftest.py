import os
import tempfile

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def pytest_configure(config):
    # keep reference caches out of the user's home directory
    os.environ.setdefault("INERTIAL_DR_CACHE", tempfile.mkdtemp(prefix="inertial-dr-cache-"))


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(1234)
