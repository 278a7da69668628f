"""Backend selection for the numeric kernels.

Numba-compiled kernels are used when numba imports cleanly, unless the
environment variable ``FMF_DISABLE_NUMBA`` is set to a truthy value, in which
case every kernel falls back to its vectorized numpy twin. Both paths are
always importable so tests and benchmarks can compare them directly.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("FMF_DISABLE_NUMBA", "").strip().lower() in _FALSY


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        import numba

        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(fn):
        return fn

    if args and callable(args[0]):
        return args[0]
    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
