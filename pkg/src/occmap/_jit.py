"""numba switch.

Set ``OCCMAP_NO_JIT=1`` to route every hot kernel through the pure-numpy
implementations in :mod:`occmap.kernels_np` instead of the compiled loops in
:mod:`occmap.kernels_nb`.  The flag is read once, at import.
"""

import os

_flag = os.environ.get("OCCMAP_NO_JIT", "").strip().lower()
JIT_DISABLED = _flag not in ("", "0", "false", "no", "off")

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False
    JIT_DISABLED = True


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, otherwise a passthrough."""
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func


def use_numba():
    return HAVE_NUMBA and not JIT_DISABLED
