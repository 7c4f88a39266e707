"""Batch kernel dispatch.

The compiled Cython module is used when it was built and importable; otherwise
the numpy implementation takes over.  Set ``DELTACERT_PURE_PYTHON=1`` to force
the fallback (useful for A/B checks and benchmarks).

Both backends take C-contiguous float64 stacks with the sample index first.
"""

import os

import numpy as np

from . import _kernels_py

_FORCE_PY = os.environ.get("DELTACERT_PURE_PYTHON", "").strip() not in ("", "0")

try:
    if _FORCE_PY:
        raise ImportError("pure-python backend forced")
    from . import _kernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _kernels_py
    BACKEND = "numpy"

__all__ = ["BACKEND", "extreme_eigs", "krasovskii_lmax", "static_lmin", "backend_module"]


def backend_module(name=None):
    """Return the kernel module for ``name`` ("cython", "numpy" or None for the active one)."""
    if name is None:
        return _impl
    if name == "numpy":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def extreme_eigs(mats):
    mats = _c(mats)
    if mats.shape[0] == 0:
        return np.empty((0, 2))
    return np.asarray(_impl.extreme_eigs(mats))


def krasovskii_lmax(jx, ju, hx, hu, p, x, eps):
    jx = _c(jx)
    if jx.shape[0] == 0:
        return np.empty(0)
    return np.asarray(_impl.krasovskii_lmax(jx, _c(ju), _c(hx), _c(hu), _c(p), _c(x), float(eps)))


def static_lmin(hu, x):
    hu = _c(hu)
    if hu.shape[0] == 0:
        return np.empty(0)
    return np.asarray(_impl.static_lmin(hu, _c(x)))
