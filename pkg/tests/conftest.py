import numpy as np
import pytest

from csbm import ModelSpec, assign_labels


def two_class(n, p=0.5, q=0.2, mu=(1.0, -1.0), sigma=1.0, k=1):
    spec = ModelSpec.two_class(n, p, q, list(mu), sigma, k=k)
    return spec, assign_labels(spec)


@pytest.fixture
def small_model():
    return two_class(8)


@pytest.fixture
def three_class():
    spec = ModelSpec(
        n=30, d=2, L=3,
        B=[[0.5, 0.1, 0.2], [0.1, 0.4, 0.1], [0.2, 0.1, 0.6]],
        pi=[0.2, 0.3, 0.5],
        mu=np.array([[1.0, 0.0, -1.0], [0.0, 2.0, 0.5]]),
        sigma=0.7,
    )
    return spec, assign_labels(spec)
