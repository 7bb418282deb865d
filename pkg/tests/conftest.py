import numpy as np
import pytest


def central_difference(f, arrays, h=1e-5):
    """Numerical gradient oracle: central differences on in-place perturbed arrays.

    ``f`` is a zero-argument callable returning a scalar and reading the
    arrays; ``arrays`` maps name -> mutable ndarray.  Independent of the
    tape machinery on purpose.
    """
    grads = {}
    for name, arr in arrays.items():
        flat = arr.ravel()
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        grads[name] = g.reshape(arr.shape)
    return grads


def relative_error(a, b, floor=1e-6):
    """Norm-based relative disagreement between two gradient arrays."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b)) / denom


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
