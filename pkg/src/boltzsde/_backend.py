"""Kernel backend selection.

Hot loops are compiled with numba when it is importable.  Setting the
environment variable ``BOLTZSDE_DISABLE_NUMBA=1`` before import selects the
pure-numpy code paths instead; in that mode ``jit`` is the identity, so the
scalar kernels still run (slowly) as plain Python where no vectorized
equivalent exists.
"""

import logging
import os

logger = logging.getLogger(__name__)

_flag = os.environ.get("BOLTZSDE_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError("disabled by BOLTZSDE_DISABLE_NUMBA")
    import numba
    from numba import njit, prange

    USE_NUMBA = True
    if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
        # try OpenMP before TBB; old system TBB builds are rejected with a warning
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:
    numba = None
    USE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda fn: fn


def jit(fn):
    """Compile ``fn`` in nopython mode (cached) or return it unchanged."""
    if USE_NUMBA:
        return njit(cache=True, nogil=True)(fn)
    return fn


def jit_parallel(fn):
    if USE_NUMBA:
        return njit(cache=True, nogil=True, parallel=True)(fn)
    return fn


def available_workers():
    if USE_NUMBA:
        return numba.config.NUMBA_NUM_THREADS
    return 1


def set_workers(n):
    """Set the numba thread count, clamped to what the runtime allows.

    Returns the count actually in effect.
    """
    if not USE_NUMBA:
        return 1
    limit = numba.config.NUMBA_NUM_THREADS
    n = max(1, int(n))
    if n > limit:
        logger.warning("requested %d workers, runtime limit is %d", n, limit)
        n = limit
    numba.set_num_threads(n)
    return n


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
