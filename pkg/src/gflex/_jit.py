"""Optional compilation of numeric kernels.

Kernels are written against the numpy subset that numba compiles; with
``GFLEX_JIT=0`` (or without numba) they run as ordinary Python.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

ENABLED = numba is not None and os.environ.get("GFLEX_JIT", "1") != "0"


def jit(fn):
    """Compile ``fn`` in nopython mode when enabled; keep ``fn.py_func`` either way."""
    if not ENABLED:
        fn.py_func = fn
        return fn
    return numba.njit(cache=True)(fn)
