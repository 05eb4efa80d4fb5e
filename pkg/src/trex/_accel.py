"""Optional numba acceleration.

Kernels in :mod:`trex.kernels` come in two flavours: an explicit-loop version
decorated with :func:`jit` and a vectorised numpy version. The loop version is
dispatched when numba is importable unless ``TREX_DISABLE_NUMBA`` is set to a
truthy value (``1``, ``true``, ``yes``).
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("TREX_DISABLE_NUMBA", "").strip().lower() not in (
    "1",
    "true",
    "yes",
)


def jit(**kwargs):
    """``numba.njit(**kwargs)`` if numba is installed, identity otherwise."""

    def decorator(func):
        if NUMBA_AVAILABLE:
            return numba.njit(**kwargs)(func)
        return func

    return decorator
