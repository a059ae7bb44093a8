"""Numba dispatch shim.

Hot kernels are written once with ``@njit`` and always have a vectorized
numpy twin. Setting ``SKIT_DISABLE_NUMBA=1`` (or running without numba
installed) routes every public call to the numpy twin.
"""
import os

_FALSY = {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("SKIT_DISABLE_NUMBA", "").lower() not in _FALSY


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    bare = len(args) == 1 and callable(args[0])
    if not HAVE_NUMBA:
        return args[0] if bare else (lambda f: f)
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)


def resolve_backend(backend=None):
    """Map ``None | "numba" | "numpy"`` to the backend actually used."""
    if backend is None:
        return "numba" if USE_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return backend
