import numpy as np
import pytest

from proxflow import Euclidean, Sphere, StarTree


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def line():
    return Euclidean(1)


@pytest.fixture
def plane():
    return Euclidean(2)


@pytest.fixture
def sphere():
    return Sphere(2)


@pytest.fixture
def tree():
    return StarTree([2.0, 3.0, 2.5])
