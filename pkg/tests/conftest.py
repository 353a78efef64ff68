import numpy as np
import pytest


def brute_seminorm(values, h, beta):
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    best = 0.0
    for i in range(len(v) - 1):
        diff = np.linalg.norm(v[i + 1:] - v[i], axis=1)
        lag = np.arange(1, len(v) - i) * h
        best = max(best, float((diff / lag ** beta).max()))
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
