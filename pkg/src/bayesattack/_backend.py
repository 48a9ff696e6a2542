"""Pick the compiled kernels when available, numpy otherwise.

Set ``BAYESATTACK_PURE_PYTHON=1`` to force the numpy path.

The compiled DFT is a direct row-column sum; past a side of
``DFT_COMPILED_MAX_SIDE`` the numpy version, two BLAS matrix products,
is faster (see ``benchmarks/bench_kernels.py``), so :func:`dft2` switches
on size.
"""
import os

from bayesattack import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if not os.environ.get("BAYESATTACK_PURE_PYTHON"):
    try:
        from bayesattack import _kernels_cy
    except ImportError:
        pass
    else:
        kernels = _kernels_cy
        BACKEND = "cython"


DFT_COMPILED_MAX_SIDE = 16


def dft2(real, imag, inverse):
    if real.shape[0] <= DFT_COMPILED_MAX_SIDE:
        return kernels.dft2(real, imag, inverse)
    return _kernels_py.dft2(real, imag, inverse)


def available_backends():
    """Return a mapping of backend name to kernel module."""
    found = {"python": _kernels_py}
    try:
        from bayesattack import _kernels_cy
    except ImportError:
        return found
    found["cython"] = _kernels_cy
    return found
