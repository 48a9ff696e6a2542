"""Pure numpy versions of the compiled kernels in ``_kernels_cy.pyx``."""
import numpy as np

SQRT5 = np.sqrt(5.0)


def _scaled_sq_dist(X1, X2, lengthscales):
    diff = (X1[:, None, :] - X2[None, :, :]) / lengthscales
    return np.einsum("abi,abi->ab", diff, diff)


def matern52_cov(X1, X2, lengthscales, signal_variance):
    s5r = SQRT5 * np.sqrt(_scaled_sq_dist(X1, X2, lengthscales))
    return signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * np.exp(-s5r)


def matern52_cross_grad(x, X, lengthscales, signal_variance):
    diff = x[None, :] - X
    s5r = SQRT5 * np.sqrt(np.sum((diff / lengthscales) ** 2, axis=1))
    e = np.exp(-s5r)
    k = signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * e
    g = -(5.0 / 3.0) * signal_variance * (1.0 + s5r) * e
    return k, g[:, None] * diff / lengthscales**2


def matern52_lengthscale_grad(X, lengthscales, signal_variance, W):
    """Return sum_ab W_ab dK_ab/dlog(lengthscale_i) for symmetric W."""
    diff2 = ((X[:, None, :] - X[None, :, :]) / lengthscales) ** 2
    s5r = SQRT5 * np.sqrt(diff2.sum(axis=2))
    g = (5.0 / 3.0) * signal_variance * (1.0 + s5r) * np.exp(-s5r)
    return np.einsum("ab,abi->i", W * g, diff2)


def _dft_matrix(d, sign):
    idx = np.arange(d)
    return np.exp(sign * 2j * np.pi * np.outer(idx, idx) / d) / np.sqrt(d)


def dft2(real, imag, inverse=False):
    """Row-column direct DFT with 1/d total normalization."""
    d = real.shape[0]
    F = _dft_matrix(d, 1.0 if inverse else -1.0)
    out = F @ (np.asarray(real) + 1j * np.asarray(imag)) @ F.T
    return np.ascontiguousarray(out.real), np.ascontiguousarray(out.imag)
