"""Optional numba acceleration.

Hot kernels are written so that they run either compiled by numba or as plain
numpy/Python.  Set ``SMI_DISABLE_NUMBA=1`` before importing :mod:`smi` to force
the pure-Python path (useful for debugging and for the benchmark).
"""
import os

_flag = os.environ.get("SMI_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:
    numba = None
    USE_NUMBA = False


def jit(fn=None, *, cache=False):
    """``numba.njit`` when enabled, identity otherwise."""
    if fn is None:
        return lambda f: jit(f, cache=cache)
    if USE_NUMBA:
        return numba.njit(cache=cache)(fn)
    return fn
