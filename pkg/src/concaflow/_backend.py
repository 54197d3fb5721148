"""Backend selection for the hot kernels.

``CONCAFLOW_BACKEND=numpy`` forces the pure numpy/scipy path even when numba
is importable.  ``CONCAFLOW_THREADS`` caps the numba thread pool.
"""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_requested = os.environ.get("CONCAFLOW_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"CONCAFLOW_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"


def thread_cap() -> int | None:
    raw = os.environ.get("CONCAFLOW_THREADS")
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError("CONCAFLOW_THREADS must be a positive integer")
    return n


if USE_NUMBA:
    _cap = thread_cap()
    if _cap is not None:
        numba.set_num_threads(min(_cap, numba.config.NUMBA_NUM_THREADS))


def njit(*args, **kwargs):
    """``numba.njit`` when the numba backend is active, identity otherwise."""
    if not USE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
