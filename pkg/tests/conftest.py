import numpy as np
import pytest

from bayesattack._backend import available_backends


def naive_dft2(x, inverse=False):
    """O(d^4) double sum, kept independent of the package transforms."""
    x = np.asarray(x, dtype=complex)
    d = x.shape[0]
    sign = 1.0 if inverse else -1.0
    out = np.zeros((d, d), dtype=complex)
    for u in range(d):
        for v in range(d):
            acc = 0j
            for i in range(d):
                for j in range(d):
                    acc += x[i, j] * np.exp(sign * 2j * np.pi * (u * i + v * j) / d)
            out[u, v] = acc / d
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=sorted(available_backends()))
def backend(request):
    return available_backends()[request.param]
