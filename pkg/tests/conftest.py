import numpy as np
import pytest

from ljsr.model import PhantomSpec, make_dynamic_phantom


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def rel_inner_gap(a, b):
    """|a - b| / max(|a|, |b|) for two inner products."""
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@pytest.fixture(scope="session")
def phantom6():
    return make_dynamic_phantom(PhantomSpec(nx=32, ny=32, N=60, period=6, seed=0))
