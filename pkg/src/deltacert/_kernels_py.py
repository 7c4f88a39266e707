"""Pure-numpy implementations of the batch kernels in ``_kernels.pyx``."""

import numpy as np


def extreme_eigs(mats):
    mats = np.asarray(mats, dtype=float)
    sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    w = np.linalg.eigvalsh(sym)
    return np.stack([w[:, 0], w[:, -1]], axis=1)


def dissipation_matrices(jx, ju, hx, hu, p, x, eps):
    """Stack of dissipation matrices, one per sample (shape (N, n+m, n+m))."""
    N, n, _ = jx.shape
    m = ju.shape[2]
    k = n + m
    t = np.zeros((N, 2 * m, k))
    t[:, :m, n:] = np.eye(m)
    t[:, m:, :n] = hx
    t[:, m:, n:] = hu
    q = -np.einsum("sli,lr,srj->sij", t, x, t)
    pj = np.einsum("il,slj->sij", p, jx)
    q[:, :n, :n] += pj + np.swapaxes(pj, 1, 2) + eps * np.eye(n)
    pju = np.einsum("il,slj->sij", p, ju)
    q[:, :n, n:] += pju
    q[:, n:, :n] += np.swapaxes(pju, 1, 2)
    return 0.5 * (q + np.swapaxes(q, 1, 2))


def krasovskii_lmax(jx, ju, hx, hu, p, x, eps):
    q = dissipation_matrices(jx, ju, hx, hu, p, x, eps)
    return np.linalg.eigvalsh(q)[:, -1]


def static_lmin(hu, x):
    N, m, _ = hu.shape
    w = np.concatenate([np.broadcast_to(np.eye(m), (N, m, m)), hu], axis=1)
    r = np.einsum("sli,lr,srj->sij", w, x, w)
    r = 0.5 * (r + np.swapaxes(r, 1, 2))
    return np.linalg.eigvalsh(r)[:, 0]
