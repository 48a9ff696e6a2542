"""Low-dimensional perturbation subspaces and the maps back to image space.

Two families are provided:

* Low-frequency Fourier coefficients (``FFT_FULL``, ``FFT_COS``, ``FFT_SIN``),
  mapped to pixels with an orthonormal inverse DFT. The map is an l2
  isometry, so an l2 constraint on the coefficients carries over exactly.
* A low-resolution pixel grid (``NNI``), mapped with nearest-neighbour
  upsampling. This preserves the l-infinity norm.

Perturbations are plain ``(C, H, W)`` float arrays.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from bayesattack import _backend


class BasisMode(str, enum.Enum):
    FFT_FULL = "fft_full"
    FFT_COS = "fft_cos"
    FFT_SIN = "fft_sin"
    NNI = "nni"

    @property
    def is_fourier(self) -> bool:
        return self is not BasisMode.NNI


@lru_cache(maxsize=64)
def conjugate_orbits(d: int, k: int):
    """Group the ``k x k`` low-frequency bins into Hermitian-conjugate orbits.

    Returns ``(bins, mirrors, self_conj)`` arrays in row-major order of the
    first bin of each orbit. A bin whose mirror ``(-u mod d, -v mod d)`` is
    also in the square is folded into the earlier orbit.
    """
    taken = set()
    bins, mirrors, self_conj = [], [], []
    for u in range(k):
        for v in range(k):
            if (u, v) in taken:
                continue
            m = ((-u) % d, (-v) % d)
            taken.add((u, v))
            taken.add(m)
            bins.append((u, v))
            mirrors.append(m)
            self_conj.append(m == (u, v))
    return np.array(bins, dtype=np.intp), np.array(mirrors, dtype=np.intp), np.array(self_conj)


@dataclass(frozen=True)
class SubspaceSpec:
    """Shape of a low-dimensional search space.

    ``low_dim`` is the side ``k`` of the low-frequency square (or of the
    low-resolution grid); ``full_dim`` is the image side ``d``.

    Fourier coefficient vectors are laid out channel-major; within a
    channel the cosine (real-part) coefficients come first, one per
    conjugate orbit, then the sine (imaginary-part) coefficients, one per
    orbit that is not self-conjugate. Self-conjugate bins (DC, Nyquist)
    carry no sine component for a real image, so they get no sine slot.
    """

    mode: BasisMode
    low_dim: int
    channels: int
    full_dim: int

    def __post_init__(self):
        object.__setattr__(self, "mode", BasisMode(self.mode))
        if not 1 <= self.low_dim <= self.full_dim:
            raise ValueError(f"need 1 <= low_dim <= full_dim, got {self.low_dim}, {self.full_dim}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.per_channel == 0:
            raise ValueError(f"{self.mode.value} with low_dim={self.low_dim} on a {self.full_dim}-pixel "
                             "side has no free coefficients (every bin is self-conjugate)")

    def _counts(self):
        _, _, sc = conjugate_orbits(self.full_dim, self.low_dim)
        return sc.size, int(np.count_nonzero(~sc))

    @property
    def per_channel(self) -> int:
        if self.mode is BasisMode.NNI:
            return self.low_dim * self.low_dim
        n_cos, n_sin = self._counts()
        if self.mode is BasisMode.FFT_COS:
            return n_cos
        if self.mode is BasisMode.FFT_SIN:
            return n_sin
        return n_cos + n_sin

    @property
    def dim(self) -> int:
        return self.channels * self.per_channel

    @property
    def image_shape(self):
        return (self.channels, self.full_dim, self.full_dim)


def _complex_in(x):
    a = np.asarray(x)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square 2-D array, got shape {a.shape}")
    return np.real(a).astype(np.float64), np.imag(a).astype(np.float64)


def dft2(x) -> np.ndarray:
    """Orthonormal 2-D DFT: ``X[u,v] = (1/d) sum_ij x[i,j] exp(-2 pi i (ui+vj)/d)``."""
    re, im = _complex_in(x)
    ore, oim = _backend.dft2(re, im, False)
    return ore + 1j * oim


def idft2(X) -> np.ndarray:
    """Inverse of :func:`dft2` (also orthonormal)."""
    re, im = _complex_in(X)
    ore, oim = _backend.dft2(re, im, True)
    return ore + 1j * oim


def _check_len(coeffs, spec: SubspaceSpec):
    c = np.asarray(coeffs, dtype=np.float64).ravel()
    if c.size != spec.dim:
        raise ValueError(f"expected {spec.dim} coefficients for {spec}, got {c.size}")
    return c


def fourier_spectrum(coeffs, spec: SubspaceSpec) -> np.ndarray:
    """Hermitian-complete ``(C, d, d)`` spectrum for a coefficient vector."""
    if not spec.mode.is_fourier:
        raise ValueError("fourier_spectrum needs a Fourier basis mode")
    c = _check_len(coeffs, spec).reshape(spec.channels, spec.per_channel)
    d = spec.full_dim
    bins, mirrors, self_conj = conjugate_orbits(d, spec.low_dim)
    n_orb = self_conj.size
    pair = ~self_conj
    X = np.zeros((spec.channels, d, d), dtype=np.complex128)
    r2 = np.sqrt(0.5)
    for ch in range(spec.channels):
        a = np.zeros(n_orb)
        b = np.zeros(n_orb)
        if spec.mode is BasisMode.FFT_COS:
            a[:] = c[ch]
        elif spec.mode is BasisMode.FFT_SIN:
            b[pair] = c[ch]
        else:
            a[:] = c[ch, :n_orb]
            b[pair] = c[ch, n_orb:]
        z = np.where(self_conj, a, r2 * (a + 1j * b))
        X[ch, bins[:, 0], bins[:, 1]] = z
        X[ch, mirrors[pair, 0], mirrors[pair, 1]] = np.conj(z[pair])
    return X


def fft_embed(coeffs, spec: SubspaceSpec) -> np.ndarray:
    """Map low-frequency coefficients to a real ``(C, d, d)`` perturbation.

    Linear and l2-isometric: ``||fft_embed(c)||_2 == ||c||_2``.
    """
    X = fourier_spectrum(coeffs, spec)
    return np.stack([idft2(X[ch]).real for ch in range(spec.channels)])


def nni_upsample(coeffs, spec: SubspaceSpec, out_shape=None) -> np.ndarray:
    """Nearest-neighbour upsampling of a ``(C, k, k)`` grid.

    Output pixel ``(i, j)`` copies grid cell ``(floor(i k / H), floor(j k / W))``.
    """
    if spec.mode is not BasisMode.NNI:
        raise ValueError("nni_upsample needs mode NNI")
    k = spec.low_dim
    low = _check_len(coeffs, spec).reshape(spec.channels, k, k)
    H, W = out_shape if out_shape is not None else (spec.full_dim, spec.full_dim)
    rows = (np.arange(H) * k) // H
    cols = (np.arange(W) * k) // W
    return low[:, rows[:, None], cols[None, :]]


def embed(coeffs, spec: SubspaceSpec) -> np.ndarray:
    """Dispatch to :func:`fft_embed` or :func:`nni_upsample` by mode."""
    if spec.mode is BasisMode.NNI:
        return nni_upsample(coeffs, spec)
    return fft_embed(coeffs, spec)


def project_linf(coeffs, eps: float) -> np.ndarray:
    """Clamp onto the l-infinity ball of radius ``eps`` at the origin."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return np.clip(np.asarray(coeffs, dtype=np.float64), -eps, eps)


def project_l2(coeffs, eps: float) -> np.ndarray:
    """Radially shrink onto the l2 ball of radius ``eps`` at the origin."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    c = np.asarray(coeffs, dtype=np.float64)
    norm = np.linalg.norm(c)
    if norm <= eps:
        return c.copy()
    return c * (eps / norm)
