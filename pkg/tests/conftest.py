from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from misfit.dataset import make_grid
from misfit.simulate import MaternSpec, matern_kernel

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid100():
    return make_grid(100)


@pytest.fixture(scope="session")
def matern100(grid100):
    return matern_kernel(MaternSpec(1.0, 0.5, 2.5), grid100)


def random_psd(rng, M, rank=None, scale=1.0):
    G = rng.standard_normal((M, rank or M))
    return scale * (G @ G.T) / (rank or M)
