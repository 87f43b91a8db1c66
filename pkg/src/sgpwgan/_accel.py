"""Numba switch for the hot kernels.

Every kernel in ``sgpwgan._kernels`` is written in the subset of numpy that
numba compiles, so the same source runs either JIT-compiled or as plain
numpy.  Set ``SGPWGAN_DISABLE_NUMBA=1`` before import to force the numpy
path (also used automatically when numba is not importable).
"""

import os

_FLAG = os.environ.get("SGPWGAN_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("disabled by SGPWGAN_DISABLE_NUMBA")
    import numba

    using_numba = True
except ImportError:
    numba = None
    using_numba = False


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` when numba is active, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if using_numba:
            return numba.njit(**kwargs)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)


def backend_name():
    return "numba" if using_numba else "numpy"
