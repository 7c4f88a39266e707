"""Region-of-attraction estimates from the aggregate Krasovskii storage.

The dissipative region on the algebraic manifold is sampled on a state
grid: each grid state gets its consistent ``u(x)``, the per-bus pointwise
conditions are evaluated there, and the critical level is the smallest
storage value found on the sampled boundary.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .dae import CONVERGED, solve_algebraic, solve_algebraic_batch
from .devices import StaticBusModel
from .dissipativity import pointwise_margin
from .errors import AlgebraicSolveError, GridTooSmallError, InvalidInputError, WellPosednessError
from .linalg import PSD_TOL

CHUNK = 50_000


class AggregateStorage:
    """``S(x, u) = sum_i p_i f_i^T P_i f_i`` over dynamic buses."""

    def __init__(self, weights, certificates):
        self.weights = np.asarray(weights, float)
        self.certificates = list(certificates)
        if self.weights.size != len(self.certificates):
            raise InvalidInputError("one weight per bus certificate is required")

    def __call__(self, assembly, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        total = 0.0
        for k in assembly.dynamic:
            cert = self.certificates[k]
            dev = assembly.devices[k]
            f = dev.f(x[..., assembly.x_slices[k]], u[..., assembly.u_slices[k]])
            total = total + self.weights[k] * np.einsum("...i,ij,...j->...", f, np.asarray(cert.P), f)
        return np.asarray(total, float)


def aggregate_storage(weights, certificates):
    return AggregateStorage(weights, certificates)


class RegionPredicate:
    """Membership in the product of the per-bus dissipative regions.

    A bus passes when its port sample lies in the certificate box (if one is
    set) and its pointwise condition holds within ``psd_tol``.
    """

    def __init__(self, certificates, psd_tol=PSD_TOL, use_boxes=True):
        self.certificates = list(certificates)
        self.psd_tol = psd_tol
        self.use_boxes = use_boxes

    def bus_flags(self, assembly, x, u):
        x = np.atleast_2d(np.asarray(x, float))
        u = np.atleast_2d(np.asarray(u, float))
        out = np.zeros((len(x), len(self.certificates)), dtype=bool)
        for k, (dev, cert) in enumerate(zip(assembly.devices, self.certificates)):
            xs, us = x[:, assembly.x_slices[k]], u[:, assembly.u_slices[k]]
            static = isinstance(dev, StaticBusModel)
            margin = pointwise_margin(dev, cert, None if static else xs, us)
            ok = margin >= -self.psd_tol
            if self.use_boxes and cert.region is not None:
                pts = us if static else np.concatenate([xs, us], axis=1)
                ok &= cert.region.contains(pts)
            out[:, k] = ok
        return out

    def __call__(self, assembly, x, u):
        return np.all(self.bus_flags(assembly, x, u), axis=1)

    def on_manifold(self, assembly, x, u_seed):
        """Solve ``u(x)`` and evaluate; returns ``(u, solved, holds)``."""
        x = np.atleast_2d(np.asarray(x, float))
        u, status, _ = solve_algebraic_batch(assembly, x, u_seed)
        solved = status == CONVERGED
        holds = np.zeros(len(x), dtype=bool)
        if np.any(solved):
            holds[solved] = self(assembly, x[solved], u[solved])
        return u, solved, holds


@dataclass
class LevelEstimate:
    l_bar: float
    boundary_count: int
    argmin: np.ndarray
    argmin_u: np.ndarray
    grid: object
    true_count: int
    unsolved_count: int
    touches_grid_edge: bool

    def summary(self):
        return {
            "l_bar": float(self.l_bar),
            "boundary_count": int(self.boundary_count),
            "argmin": [float(v) for v in self.argmin],
            "predicate_true": int(self.true_count),
            "unsolved": int(self.unsolved_count),
            "touches_grid_edge": bool(self.touches_grid_edge),
            "grid": {
                "lower": [float(v) for v in self.grid.lower],
                "upper": [float(v) for v in self.grid.upper],
                "samples_per_axis": list(self.grid.samples_per_axis),
            },
        }


@dataclass
class GridScan:
    points: np.ndarray
    u: np.ndarray
    solved: np.ndarray
    holds: np.ndarray
    boundary: np.ndarray
    S: np.ndarray


def _boundary(mask):
    """Predicate-true cells with a predicate-false neighbour along some axis."""
    b = np.zeros_like(mask)
    for ax in range(mask.ndim):
        lo = [slice(None)] * mask.ndim
        hi = [slice(None)] * mask.ndim
        lo[ax], hi[ax] = slice(None, -1), slice(1, None)
        diff = mask[tuple(lo)] & ~mask[tuple(hi)]
        b[tuple(lo)] |= diff
        diff = mask[tuple(hi)] & ~mask[tuple(lo)]
        b[tuple(hi)] |= diff
    return b


def _edge(mask):
    e = np.zeros_like(mask)
    for ax in range(mask.ndim):
        idx = [slice(None)] * mask.ndim
        for end in (0, -1):
            idx[ax] = end
            e[tuple(idx)] = True
    return bool(np.any(mask & e))


def scan_grid(assembly, predicate, storage, x_grid, u_seed):
    """Evaluate the manifold predicate and storage on every grid state."""
    pts = x_grid.grid()
    if pts.shape[1] != assembly.n:
        raise InvalidInputError(f"grid has dim {pts.shape[1]}, system state dim is {assembly.n}")
    u = np.zeros((len(pts), assembly.m))
    solved = np.zeros(len(pts), bool)
    holds = np.zeros(len(pts), bool)
    S = np.full(len(pts), np.nan)
    for a in range(0, len(pts), CHUNK):
        sl = slice(a, a + CHUNK)
        u[sl], solved[sl], holds[sl] = predicate.on_manifold(assembly, pts[sl], u_seed)
        ok = np.flatnonzero(solved[sl]) + a
        if ok.size:
            S[ok] = storage(assembly, pts[ok], u[ok])
    shape = x_grid.samples_per_axis
    bnd = _boundary(holds.reshape(shape)).ravel()
    return GridScan(pts, u, solved, holds, bnd, S)


def estimate_level(assembly, predicate, storage, x_grid, u_seed, scan=None):
    """Critical level ``l_bar = min S`` over the sampled boundary of the region.

    Raises
    ------
    GridTooSmallError
        If the predicate holds on the whole grid or no boundary is found.
    """
    scan = scan or scan_grid(assembly, predicate, storage, x_grid, u_seed)
    if scan.holds.all():
        raise GridTooSmallError("predicate holds on every grid point; enlarge the grid")
    if not scan.holds.any():
        raise GridTooSmallError("predicate holds nowhere on the grid")
    idx = np.flatnonzero(scan.boundary)
    if idx.size == 0:
        raise GridTooSmallError("no boundary samples detected")
    i = idx[np.argmin(scan.S[idx])]
    return LevelEstimate(
        float(scan.S[i]), int(idx.size), scan.points[i].copy(), scan.u[i].copy(), x_grid,
        int(scan.holds.sum()), int((~scan.solved).sum()),
        _edge(scan.holds.reshape(x_grid.samples_per_axis)),
    ), scan


@dataclass
class InitialConditionVerdict:
    status: str
    S0: float
    level: float
    predicate: bool
    reason: str
    u0: np.ndarray

    @property
    def certified(self):
        return self.status == "certified"

    def summary(self):
        return {
            "status": self.status,
            "S0": float(self.S0),
            "l_bar": float(self.level),
            "predicate": bool(self.predicate),
            "reason": self.reason,
            "u0": [float(v) for v in self.u0],
        }


def certify_initial_condition(assembly, predicate, storage, level, x0, u_guess, margin=1e-6):
    """Certified iff the predicate holds at ``x0`` and ``S(x0, u0) < l_bar - margin``.

    A failed verdict is ``not-certified``; instability is never claimed.

    Raises
    ------
    AlgebraicSolveError
        If no consistent ``u0`` exists from ``u_guess`` (input not certifiable).
    """
    x0 = np.asarray(x0, float)
    l_bar = level.l_bar if isinstance(level, LevelEstimate) else float(level)
    try:
        u0 = solve_algebraic(assembly, x0, u_guess)
    except WellPosednessError as exc:
        raise AlgebraicSolveError(f"not-certifiable input: {exc}") from None
    S0 = float(storage(assembly, x0, u0))
    holds = bool(predicate(assembly, x0, u0)[0])
    if isinstance(level, LevelEstimate) and not level.grid.contains(x0):
        return InitialConditionVerdict("not-certified", S0, l_bar, holds, "outside the level grid", u0)
    if not holds:
        return InitialConditionVerdict("not-certified", S0, l_bar, holds, "outside the dissipative region", u0)
    if not S0 < l_bar - margin:
        return InitialConditionVerdict("not-certified", S0, l_bar, holds, "storage above the critical level", u0)
    return InitialConditionVerdict("certified", S0, l_bar, holds, "inside the certified sublevel set", u0)


def write_point_cloud(path, scan):
    n = scan.points.shape[1]
    header = [f"x_{i + 1}" for i in range(n)] + ["S", "predicate", "boundary"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p, s, h, b in zip(scan.points, scan.S, scan.holds, scan.boundary):
            w.writerow([f"{v:.15g}" for v in p] + [f"{s:.15g}", str(int(h)), str(int(b))])
