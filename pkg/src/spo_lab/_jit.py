"""Optional numba acceleration.

Set ``SPO_LAB_NUMBA=0`` to force the pure-numpy kernels (useful for
debugging and for checking that both paths agree).
"""
import logging
import os

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def _flag_enabled() -> bool:
    value = os.environ.get("SPO_LAB_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "no", "off")


USE_NUMBA = HAVE_NUMBA and _flag_enabled()


def jit(func):
    """Compile ``func`` in nopython mode when numba is importable.

    The plain Python function stays reachable as ``.py_func`` either way, so
    callers can run both versions side by side.
    """
    if not HAVE_NUMBA:
        func.py_func = func
        return func
    return numba.njit(cache=False)(func)
