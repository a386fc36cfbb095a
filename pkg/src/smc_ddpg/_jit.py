"""Optional numba acceleration.

Set ``SMC_DDPG_DISABLE_NUMBA=1`` before import to run every kernel as plain
numpy/Python. The kernels are written in the numba-compatible subset so the
same source serves both paths.
"""
import os

DISABLE_ENV = "SMC_DDPG_DISABLE_NUMBA"


def _disabled():
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes", "on")


try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

NUMBA_ENABLED = _numba is not None and not _disabled()


def njit(func=None, **options):
    """``numba.njit`` when enabled, otherwise the identity decorator."""
    if func is None:
        return lambda f: njit(f, **options)
    if not NUMBA_ENABLED:
        return func
    options.setdefault("cache", True)
    return _numba.njit(**options)(func)


def python_version(func):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(func, "py_func", func)
