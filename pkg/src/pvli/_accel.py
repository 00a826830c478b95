"""Numba detection and opt-out.

Hot numeric kernels are JIT-compiled when numba is importable. Setting the
environment variable ``PVLI_NO_NUMBA=1`` forces the pure-numpy fallbacks,
which compute identical results (see benchmarks/bench_kernels.py for the
speed difference).
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def numba_disabled_by_env() -> bool:
    return os.environ.get("PVLI_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}


USE_NUMBA = HAVE_NUMBA and not numba_disabled_by_env()


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if USE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(func):
        return func

    return wrap
