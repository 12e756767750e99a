"""Backend selection for the hot kernels.

Numba is used when importable unless ``CYLSDE_NO_NUMBA`` is set to a truthy
value, in which case every kernel runs through its pure-numpy twin.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}


def _numba_requested():
    return os.environ.get("CYLSDE_NO_NUMBA", "").strip().lower() in _FALSY


try:
    import numba as _numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

DEFAULT_BACKEND = "numba" if (HAVE_NUMBA and _numba_requested()) else "numpy"


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)

    def wrap(func):
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return wrap
