import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def vectors(n, lo=-3.0, hi=3.0):
    return st.lists(st.floats(lo, hi, allow_nan=False, allow_infinity=False), min_size=n, max_size=n).map(np.array)


@st.composite
def elements(draw, n=None, lo=-3.0, hi=3.0):
    from carnot_lab.group import GroupElement, bivector_dim
    if n is None:
        n = draw(st.integers(2, 5))
    x = draw(vectors(n, lo, hi))
    Y = draw(vectors(bivector_dim(n), lo, hi))
    return GroupElement(x, Y)


@st.composite
def spd(draw, n):
    """Random symmetric positive definite Gram matrix."""
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return B @ B.T + 0.5 * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
