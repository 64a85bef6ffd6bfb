import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_dists(rng, n, m):
    """Random valid semantic distributions, including near-one-hot rows."""
    alpha = rng.choice([0.3, 1.0, 5.0], size=n)
    out = np.empty((n, m))
    for i in range(n):
        out[i] = rng.dirichlet(np.full(m, alpha[i]))
    return out


def scattered_cloud(rng, n, extent, m=5):
    """Random positions in a cube plus matching random distributions."""
    pos = rng.uniform(0.0, extent, size=(n, 3))
    return pos, random_dists(rng, n, m)
