"""Backend selection for the hot kernels.

Set ``MRL_DISABLE_NUMBA=1`` to force the pure-numpy implementations. When numba
is not importable the numpy path is used regardless of the flag.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_DISABLED = os.environ.get("MRL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` with caching on, or a no-op decorator without numba."""
    kwargs.setdefault("cache", True)
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


def backend():
    return "numba" if USE_NUMBA else "numpy"
