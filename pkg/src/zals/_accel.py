"""Numba toggle.

Set ``ZALS_DISABLE_NUMBA=1`` to force the pure-numpy kernels. The flag is
read once, at import time.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAS_NUMBA = False

_FLAG = os.environ.get("ZALS_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAS_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def n_threads():
    """Worker cap from ``ZALS_THREADS``; defaults to the visible core count."""
    raw = os.environ.get("ZALS_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))
