import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def finite_difference(loss_fn, param, h=1e-5):
    """Independent central-difference gradient for one parameter tensor."""
    grad = np.zeros_like(param.data)
    flat = param.data.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = float(loss_fn().data)
        flat[k] = orig - h
        down = float(loss_fn().data)
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * h)
    return grad


def max_rel_err(a, b, floor=1e-6):
    denom = np.maximum(np.abs(a) + np.abs(b), floor)
    return float(np.max(np.abs(a - b) / denom))
