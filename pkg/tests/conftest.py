import math

import numpy as np
import pytest

from latalign.toy.model import ToyModel

LN2 = math.log(2.0)


def random_logprobs(rng, m, V, spread=2.0):
    z = rng.normal(scale=spread, size=(m, V))
    return z - np.logaddexp.reduce(z, axis=1, keepdims=True)


def random_target(rng, n, V):
    """Token ids in 1..V-1 (never the blank, id 0)."""
    return rng.integers(1, V, size=n).tolist()


def fd_grad(f, x, h=1e-6):
    """Central finite differences of scalar f at array x (x is modified in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        up = f()
        x[idx] = old - h
        down = f()
        x[idx] = old
        g[idx] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    return ToyModel.init(9, d_model=4, hidden=5, rng=7, embed_scale=0.5)
