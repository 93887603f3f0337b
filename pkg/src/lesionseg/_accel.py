"""Backend selection for the hot kernels.

Every kernel that dominates runtime exists twice: a numba ``@njit`` loop and
a vectorised numpy twin. ``LESIONSEG_BACKEND=numpy`` (or a missing numba)
routes all calls to the numpy versions. The choice can also be switched at
runtime with :func:`use_backend`, which the benchmarks rely on.
"""
import contextlib
import logging
import os

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency
    numba = None
    HAVE_NUMBA = False

BACKENDS = ("numba", "numpy")

_requested = os.environ.get("LESIONSEG_BACKEND", "numba").strip().lower()
if _requested not in BACKENDS:
    raise ImportError(f"LESIONSEG_BACKEND must be one of {BACKENDS}, got {_requested!r}")
_backend = _requested if HAVE_NUMBA else "numpy"


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def backend():
    return _backend


def set_backend(name):
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    _backend = name


@contextlib.contextmanager
def use_backend(name):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
