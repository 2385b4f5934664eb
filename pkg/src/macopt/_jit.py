"""Optional numba acceleration.

Kernels are written so they run unchanged as plain numpy code.  Setting
``MACOPT_DISABLE_NUMBA=1`` (or running without numba installed) selects the
pure-numpy path; the switch is read once at import time.
"""
import os

_FLAG = os.environ.get("MACOPT_DISABLE_NUMBA", "").strip().lower()

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
