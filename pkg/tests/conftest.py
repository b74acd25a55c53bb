import numpy as np
import pytest
from hypothesis import settings

from fracorlicz.domain import Box, GridFunction, build_grid, build_kernel

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid1d():
    return build_grid(1, Box((0.0,), (2.0,)), 0.05, Box((0.5,), (1.5,)), Box((0.75,), (1.25,)))


@pytest.fixture(scope="session")
def kernel1d(grid1d):
    return build_kernel(grid1d, 0.5)


@pytest.fixture(scope="session")
def grid2d():
    return build_grid(2, Box((0.0, 0.0), (1.0, 1.0)), 1 / 16, Box((0.25, 0.25), (0.75, 0.75)),
                      Box((0.375, 0.375), (0.625, 0.625)))


@pytest.fixture(scope="session")
def kernel2d(grid2d):
    return build_kernel(grid2d, 0.4)


@pytest.fixture
def random_function(rng):
    def make(gd, scale=1.0):
        m = int(gd.omega_mask.sum())
        return GridFunction.from_omega(gd, scale * rng.standard_normal(m))

    return make


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep
