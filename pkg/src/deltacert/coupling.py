"""Weighted coupling condition ``K(p) = [-C; I]^T P_pi^T blkdiag(p_i X_i) P_pi [-C; I] <= 0``."""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import DimensionMismatchError, InvalidInputError, RegionTooLargeError
from .linalg import PSD_TOL, SymmetricMatrix

GRID_CAP = 1_000_000


@dataclass
class CouplingCertificate:
    weights: np.ndarray
    lambda_max_K: float
    feasible: bool
    strategy: str
    psd_tol: float = PSD_TOL
    evaluations: int = 0

    def summary(self):
        return {
            "weights": [float(v) for v in self.weights],
            "lambda_max_K": float(self.lambda_max_K),
            "feasible": bool(self.feasible),
            "strategy": self.strategy,
            "evaluations": int(self.evaluations),
        }


def _basis(X_list, C, P_pi):
    """Per-bus matrices ``K_i`` with ``K(p) = sum_i p_i K_i``."""
    Xs = [np.asarray(X, float) for X in X_list]
    C = np.asarray(C, float)
    P_pi = np.asarray(P_pi, float)
    m = C.shape[0]
    dims = [X.shape[0] for X in Xs]
    if C.shape != (m, m) or sum(dims) != 2 * m or P_pi.shape != (2 * m, 2 * m):
        raise DimensionMismatchError(
            f"C {C.shape}, P_pi {P_pi.shape} and supply blocks {dims} are inconsistent"
        )
    W = P_pi @ np.vstack([-C, np.eye(m)])
    out, off = [], 0
    for X, d in zip(Xs, dims):
        Wi = W[off:off + d]
        out.append(Wi.T @ X @ Wi)
        off += d
    return np.stack(out)


def coupling_matrix(p, X_list, C, P_pi):
    """Return ``K(p)`` as a :class:`SymmetricMatrix`."""
    p = np.asarray(p, float)
    if p.ndim != 1 or p.size != len(X_list):
        raise DimensionMismatchError(f"{p.size} weights for {len(X_list)} buses")
    if np.any(p <= 0):
        raise InvalidInputError("weights must be positive")
    return SymmetricMatrix(np.einsum("i,ijk->jk", p, _basis(X_list, C, P_pi)))


def _lmax(basis, p):
    K = np.einsum("i,ijk->jk", p, basis)
    w, v = np.linalg.eigh(0.5 * (K + K.T))
    return w[-1], v[:, -1]


def _project_simplex(v, total, floor):
    """Euclidean projection onto ``{p >= floor, sum p = total}``."""
    n = v.size
    y = v - floor
    s = total - n * floor
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - s
    k = np.nonzero(u - css / np.arange(1, n + 1) > 0)[0][-1]
    tau = css[k] / (k + 1)
    return np.maximum(y - tau, 0.0) + floor


def _subgradient(basis, iterations, p0=None):
    N = basis.shape[0]
    floor = 1e-6 * N
    p = np.ones(N) if p0 is None else N * np.asarray(p0, float) / np.sum(p0)
    best_val, best_p = np.inf, p.copy()
    step0 = 0.5 * N
    for k in range(iterations):
        val, v = _lmax(basis, p)
        if val < best_val:
            best_val, best_p = val, p.copy()
        g = np.einsum("j,ijk,k->i", v, basis, v)
        g = g - g.mean()  # tangent to the simplex
        gn = np.linalg.norm(g)
        if gn == 0:
            break
        p = _project_simplex(p - step0 / np.sqrt(k + 1) * g / gn, N, floor)
    return best_p, best_val, iterations


def _grid(basis, points, p_lo, p_hi):
    N = basis.shape[0]
    if points ** N > GRID_CAP:
        raise RegionTooLargeError(f"weight grid has {points ** N} points, cap is {GRID_CAP}")
    axis = np.geomspace(p_lo, p_hi, points)
    best_val, best_p, count = np.inf, None, 0
    for combo in product(axis, repeat=N):
        p = np.asarray(combo)
        p = N * p / p.sum()
        val, _ = _lmax(basis, p)
        count += 1
        if val < best_val:
            best_val, best_p = val, p
    return best_p, best_val, count


def find_weights(X_list, C, P_pi, strategy="auto", p=None, iterations=500, grid_points=21,
                 p_lo=1e-2, p_hi=1e2, psd_tol=PSD_TOL):
    """Search positive weights making ``K(p)`` negative semidefinite.

    ``strategy`` is ``fixed`` (evaluate ``p``), ``grid`` (log lattice on
    ``[p_lo, p_hi]^N``), ``subgradient`` (projected subgradient on
    ``sum p = N``) or ``auto``: fixed when ``p`` is given, then subgradient,
    then grid.  Infeasibility is reported, not raised.
    """
    basis = _basis(X_list, C, P_pi)
    N = basis.shape[0]
    if strategy not in ("auto", "fixed", "grid", "subgradient"):
        raise InvalidInputError(f"unknown weight strategy {strategy!r}")
    if strategy == "fixed" and p is None:
        raise InvalidInputError("fixed strategy needs weights p")
    if p is not None:
        p = np.asarray(p, float)
        if p.shape != (N,) or np.any(p <= 0):
            raise InvalidInputError("fixed weights must be positive, one per bus")

    best = None
    evals = 0

    def consider(cand, val, name, n):
        nonlocal best, evals
        evals += n
        if best is None or val < best[1]:
            best = (np.asarray(cand, float), float(val), name)

    if p is not None and strategy in ("auto", "fixed"):
        consider(p, _lmax(basis, p)[0], "fixed", 1)
    unresolved = best is None or best[1] > psd_tol
    if strategy == "subgradient" or (strategy == "auto" and unresolved):
        consider(*_subgradient(basis, iterations, p)[:2], "subgradient", iterations)
    if strategy == "grid" or (strategy == "auto" and best[1] > psd_tol):
        cand, val, n = _grid(basis, grid_points, p_lo, p_hi)
        consider(cand, val, "grid", n)
    p_best, val, name = best
    return CouplingCertificate(p_best, val, bool(val <= psd_tol), name, psd_tol, evals)
