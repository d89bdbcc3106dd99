"""Numba switch.

Hot kernels are written twice: a loop version compiled with ``numba.njit`` and a
vectorised numpy version.  Set ``MABRRT_DISABLE_NUMBA=1`` (before import) to force
the numpy path, e.g. on platforms without numba wheels.
"""
import os

_disabled = os.environ.get("MABRRT_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via env flag
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, else a no-op decorator."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f


USE_NUMBA = HAVE_NUMBA
