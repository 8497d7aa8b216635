"""Numba switch.

Set ``KGNAV_NUMBA=0`` to run every kernel through its pure-numpy path.
The flag is read once, at import time.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("KGNAV_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The compiled function is always built when numba exists (so tests and the
    benchmark can compare both paths); whether callers use it is decided by
    ``USE_NUMBA``.
    """
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)

    def wrap(fn):
        if not HAVE_NUMBA:
            return fn
        return numba.njit(**kwargs)(fn)

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap
