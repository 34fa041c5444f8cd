import numpy as np
import pytest

from deltatab.data import from_arrays
from deltatab.datasets import bundled
from deltatab.pipeline import prepare_splits


@pytest.fixture(scope="session")
def clusters_raw():
    return bundled("clusters")


@pytest.fixture(scope="session")
def clusters_splits(clusters_raw):
    return prepare_splits(clusters_raw, seed=0)


@pytest.fixture(scope="session")
def friedman_splits():
    return prepare_splits(bundled("friedman"), seed=0)


@pytest.fixture(scope="session")
def credit_raw():
    return bundled("credit")


def blobs(n=200, d=3, sep=6.0, seed=0):
    """Two well separated blobs along feature 0, labels equal to blob id."""
    rng = np.random.default_rng(seed)
    z = np.arange(n) % 2
    X = rng.normal(scale=0.5, size=(n, d))
    X[:, 0] += np.where(z == 1, sep / 2, -sep / 2)
    return from_arrays(X, z, "binclass")
