"""Selects the execution backend for the hot convolution kernels.

Two backends exist: "numba" (JIT-compiled loops) and "numpy" (vectorized
fallback). Both accumulate in the same fixed order so results agree bit for
bit on the forward path. The backend is chosen once at import time from the
RDNCNN_BACKEND environment variable and can be overridden programmatically
with set_backend() (used by tests and the benchmark).
"""

import os

ENV_VAR = "RDNCNN_BACKEND"

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def _from_environment() -> str:
    choice = os.environ.get(ENV_VAR, "auto").strip().lower() or "auto"
    if choice == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    if choice not in ("numba", "numpy"):
        raise RuntimeError(f"{ENV_VAR} must be 'numba', 'numpy' or 'auto', got {choice!r}")
    if choice == "numba" and not HAVE_NUMBA:
        raise RuntimeError(f"{ENV_VAR}=numba but numba is not importable")
    return choice


_backend = _from_environment()


def current_backend() -> str:
    return _backend


def use_numba() -> bool:
    return _backend == "numba"


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name
