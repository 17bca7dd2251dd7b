"""Optional numba acceleration.

Set ``CSL_DISABLE_NUMBA=1`` (or leave numba uninstalled) to run every kernel
through its pure-numpy path. The choice is made once, at import time, but
numba itself is only imported when a jitted kernel is first called: importing
it and loading cached machine code costs a few tenths of a second, which
commands that never touch a kernel should not pay.
"""
import functools
import importlib.util
import os

_disabled = os.environ.get("CSL_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

HAVE_NUMBA = not _disabled and importlib.util.find_spec("numba") is not None


def njit(func):
    """Lazy ``numba.njit(cache=True, nogil=True)`` when numba is active, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    compiled = None

    @functools.wraps(func)
    def call(*args):
        nonlocal compiled
        if compiled is None:
            import numba

            compiled = numba.njit(cache=True, nogil=True)(func)
        return compiled(*args)

    return call
