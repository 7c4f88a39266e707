import os
import subprocess
import sys

import numpy as np
import pytest

from deltacert import _kernels_py, kernels

try:
    cy = kernels.backend_module("cython")
except ImportError:  # extension not built
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def _stack(rng, count, n):
    a = rng.standard_normal((count, n, n))
    return np.ascontiguousarray(a + np.swapaxes(a, 1, 2))


def test_numpy_extremes_match_eigvalsh(rng):
    m = _stack(rng, 50, 6)
    got = _kernels_py.extreme_eigs(m)
    w = np.linalg.eigvalsh(m)
    assert np.allclose(got[:, 0], w[:, 0], atol=1e-12)
    assert np.allclose(got[:, 1], w[:, -1], atol=1e-12)


@needs_cython
def test_cython_extremes_match_numpy(rng):
    m = _stack(rng, 200, 7)
    assert np.allclose(np.asarray(cy.extreme_eigs(m)), _kernels_py.extreme_eigs(m), rtol=1e-10, atol=1e-10)


@needs_cython
def test_cython_krasovskii_matches_numpy(rng):
    k, n, m = 300, 3, 2
    jx, ju = rng.standard_normal((k, n, n)), rng.standard_normal((k, n, m))
    hx, hu = rng.standard_normal((k, m, n)), rng.standard_normal((k, m, m))
    p = np.eye(n) + 0.1 * np.ones((n, n))
    x = rng.standard_normal((2 * m, 2 * m))
    x = x + x.T
    a = np.asarray(cy.krasovskii_lmax(jx, ju, hx, hu, p, x, 1e-3))
    b = _kernels_py.krasovskii_lmax(jx, ju, hx, hu, p, x, 1e-3)
    assert np.allclose(a, b, rtol=1e-10, atol=1e-9)


@needs_cython
def test_cython_static_matches_numpy(rng):
    hu = rng.standard_normal((300, 2, 2))
    x = rng.standard_normal((4, 4))
    x = x + x.T
    assert np.allclose(np.asarray(cy.static_lmin(hu, x)), _kernels_py.static_lmin(hu, x), rtol=1e-10, atol=1e-10)


def test_dispatch_handles_read_only_and_empty(rng):
    m = _stack(rng, 4, 3)
    m.setflags(write=False)
    assert kernels.extreme_eigs(m).shape == (4, 2)
    assert kernels.extreme_eigs(np.empty((0, 3, 3))).shape == (0, 2)
    assert kernels.static_lmin(np.empty((0, 2, 2)), np.eye(4)).shape == (0,)


def test_backend_selection():
    assert kernels.BACKEND in ("cython", "numpy")
    assert kernels.backend_module("numpy") is _kernels_py
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


def test_pure_python_switch():
    env = dict(os.environ, DELTACERT_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", "from deltacert import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0 and r.stdout.strip() == "numpy"
