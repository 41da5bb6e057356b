"""Numba acceleration switch.

Hot kernels in :mod:`microfuse.kernels` exist in two variants: a scalar-loop
version compiled with ``numba.njit`` and a vectorized pure-NumPy version.
Setting the environment variable ``MICROFUSE_NO_NUMBA=1`` (or any of
``true``/``yes``) selects the NumPy path; so does an unimportable numba.
``benchmarks/bench_kernels.py`` times the two paths against each other.
"""

import os

_FLAG = os.environ.get("MICROFUSE_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in ("1", "true", "yes")

NUMBA_AVAILABLE = False
if not _DISABLED:
    try:
        from numba import njit as _njit

        NUMBA_AVAILABLE = True
    except ImportError:
        NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise."""
    if NUMBA_AVAILABLE:
        return _njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(func):
        return func

    return wrap
