import numpy as np
import pytest
from hypothesis import settings

from pqsmooth.quadmap import QuadraticMap2
from pqsmooth.instances import make_four_quadrant_model, random_instance, standard_strip_instance, unit_grid

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")


def fd_jacobian(f, X, h=1e-5):
    """Central differences of a batched map ``f: (N, 2) -> (N, ...)`` along both inputs."""
    X = np.asarray(X, dtype=float)
    cols = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        cols.append((f(X + e) - f(X - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture(scope="session")
def four_quadrant():
    return make_four_quadrant_model(QuadraticMap2.identity(), (0.1, 0.0), (0.0, 0.1), m=0.4)


@pytest.fixture(scope="session")
def strip_model():
    return standard_strip_instance()


@pytest.fixture(scope="session")
def random3():
    return random_instance(*unit_grid(3), amplitude=0.05, seed=7)


def random_map(rng, scale=1.0):
    return QuadraticMap2(rng.normal(size=(2, 6)) * scale)
