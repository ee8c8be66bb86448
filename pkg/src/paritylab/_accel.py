"""Kernel backend selection.

Hot loops live in :mod:`paritylab.kernels` in two flavours: a numba ``@njit``
version and a plain numpy version.  ``PARITYLAB_BACKEND`` picks one at import
time.  The default is ``numpy``: the vectorised kernels sit on BLAS matrix
products and beat the loop kernels at every size the experiments use (see
``benchmarks/bench_kernels.py``).  ``numba`` selects the compiled loops; if
numba cannot be imported the numpy path is used silently.
"""
import os

ENV_FLAG = "PARITYLAB_BACKEND"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _select_backend():
    want = os.environ.get(ENV_FLAG, "numpy").strip().lower()
    if want not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {want!r}")
    if want == "numba" and not HAVE_NUMBA:
        return "numpy"
    return want


BACKEND = _select_backend()


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    kwargs.setdefault("cache", True)
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]):
        return args[0]
    return lambda fn: fn
