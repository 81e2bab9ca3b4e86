"""Backend dispatch for the hot kernels.

The numba backend is used when importable unless the MMKGE_BACKEND
environment variable is set to "numpy". Callers may also pass an explicit
backend name, which is how the backend benchmark compares the two.
"""

from __future__ import annotations

import os

from . import kernels_numpy

_BACKENDS = {"numpy": kernels_numpy}

try:
    from . import kernels_numba
    _BACKENDS["numba"] = kernels_numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
    _HAVE_NUMBA = False


def default_backend() -> str:
    env = os.environ.get("MMKGE_BACKEND", "").strip().lower()
    if env:
        if env not in _BACKENDS:
            raise ValueError(
                f"MMKGE_BACKEND={env!r} is not one of {sorted(_BACKENDS)}")
        return env
    return "numba" if _HAVE_NUMBA else "numpy"


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str | None = None):
    """Return the kernel module for ``name`` (or the default backend)."""
    if name is None:
        name = default_backend()
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_BACKENDS)}") from None
