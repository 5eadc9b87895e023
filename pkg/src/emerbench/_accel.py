"""Optional numba acceleration.

Set ``EMERBENCH_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once at import time.
"""
import os

_DISABLED = os.environ.get("EMERBENCH_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by EMERBENCH_DISABLE_NUMBA")
    from numba import njit as _njit

    HAS_NUMBA = True
except ImportError:
    _njit = None
    HAS_NUMBA = False


def njit(func):
    """``numba.njit(cache=True)`` when available, otherwise ``None``.

    Returning ``None`` lets callers pick their numpy fallback explicitly
    instead of silently running the loop version in the interpreter.
    """
    if _njit is None:
        return None
    return _njit(cache=True)(func)


def backend() -> str:
    return "numba" if HAS_NUMBA else "numpy"
