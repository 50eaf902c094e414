"""Numba shim.

Hot kernels are compiled with numba unless ``QZENO_DISABLE_NUMBA`` is set to a
truthy value or numba cannot be imported; in that case callers dispatch to
the pure-numpy implementations instead.
"""
import os

_FLAG = os.environ.get("QZENO_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    if DISABLED_BY_ENV:
        raise ImportError("numba disabled by QZENO_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f


def set_threads(n):
    """Set the numba worker count; a no-op on the numpy backend."""
    if n is None or not HAVE_NUMBA:
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def get_threads():
    return numba.get_num_threads() if HAVE_NUMBA else 1
