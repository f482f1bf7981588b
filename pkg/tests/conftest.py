import numpy as np
import pytest

from discdream.graph import ArchConfig
from discdream.weights_io import random_weights


@pytest.fixture(scope="session")
def res16_graph():
    return random_weights(ArchConfig(16, channel_max=8), seed=1)


@pytest.fixture(scope="session")
def res32_graph():
    return random_weights(ArchConfig(32, channel_max=8), seed=2)


def fd_gradient(f, x, h=1e-5):
    """Central finite differences of scalar f at x (float64), per element."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g
