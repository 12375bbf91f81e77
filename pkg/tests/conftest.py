import numpy as np
import pytest

from skm.dataset import Dataset
from skm.geometry import CentroidSet


@pytest.fixture
def line4():
    """The 1-D four-point fixture {0, 1, 4, 5}."""
    return Dataset.from_dense([[0.0], [1.0], [4.0], [5.0]])


@pytest.fixture
def line4_c05():
    return CentroidSet.from_vectors([[0.0], [5.0]])


@pytest.fixture
def line4_cmid():
    return CentroidSet.from_vectors([[0.5], [4.5]])


def random_instance(rng, n=None, d=None, k=None, spread=10.0):
    """Small random dataset plus a random active centroid set."""
    n = n or int(rng.integers(2, 12))
    d = d or int(rng.integers(1, 4))
    k = k or int(rng.integers(1, min(n, 4) + 1))
    ds = Dataset.from_dense(rng.random((n, d)) * spread)
    c = CentroidSet.from_vectors(rng.random((k, d)) * spread)
    return ds, c
