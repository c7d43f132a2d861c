import pytest

from scatterflux import SystemSpec, clear_cache

# Unit tests run on a modest slice count; the sliced model is exactly
# unitary at any M, so identity checks do not need the converged default.
FAST_M = 1500


@pytest.fixture(scope="session")
def two_level():
    return SystemSpec.ladder(2, 1.0, 100.0)


@pytest.fixture(scope="session")
def three_level():
    return SystemSpec.ladder(3, 1.0, 100.0)


@pytest.fixture(scope="session", autouse=True)
def _fresh_cache():
    clear_cache()
    yield
    clear_cache()
