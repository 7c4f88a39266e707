"""Semi-explicit DAE ``dx/dt = f(x, u)``, ``0 = g(x, u) = u + C h(x, u)``.

Simulation, algebraic solves, equilibria, classification and load continuation.
Every evaluator accepts leading batch axes.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .devices import ConstantPowerLoad, DynamicBusModel, StaticBusModel
from .errors import (
    AlgebraicSolveError, DimensionMismatchError, EquilibriumNotFoundError, InvalidInputError,
    WellPosednessError,
)

ALG_TOL = 1e-10
EIG_TOL = 1e-9
DEDUP_TOL = 1e-6


class SystemAssembly:
    """Devices in bus order plus the network coupling."""

    def __init__(self, devices, coupling):
        self.devices = tuple(devices)
        self.coupling = coupling
        if len(self.devices) != coupling.n_bus:
            raise DimensionMismatchError(f"{len(self.devices)} devices for {coupling.n_bus} buses")
        for k, (dev, d) in enumerate(zip(self.devices, coupling.port_dims)):
            if dev.port_dim != d:
                raise DimensionMismatchError(f"bus {k}: device port dim {dev.port_dim}, network expects {d}")
        self.u_slices = coupling.bus_slices()
        self.x_slices = []
        off = 0
        for dev in self.devices:
            self.x_slices.append(slice(off, off + dev.state_dim))
            off += dev.state_dim
        self.n = off
        self.m = coupling.m
        self.C = coupling.C
        self.dynamic = [k for k, d in enumerate(self.devices) if isinstance(d, DynamicBusModel)]

    def with_load_scale(self, s):
        """Copy with every constant-power load rescaled to ``s`` times its base power."""
        devs = [d.with_scale(s) if isinstance(d, ConstantPowerLoad) else d for d in self.devices]
        return SystemAssembly(devs, self.coupling)

    def split_x(self, x):
        return [x[..., sl] for sl in self.x_slices]

    def split_u(self, u):
        return [u[..., sl] for sl in self.u_slices]

    def domain_mask(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        ok = np.ones(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]), dtype=bool)
        for dev, xs, us in zip(self.devices, self.x_slices, self.u_slices):
            if isinstance(dev, StaticBusModel):
                ok &= dev.domain_mask(u[..., us])
            else:
                ok &= dev.domain_mask(x[..., xs], u[..., us])
        return ok

    def f(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        parts = [self.devices[k].f(x[..., self.x_slices[k]], u[..., self.u_slices[k]]) for k in self.dynamic]
        if not parts:
            return np.zeros(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (0,))
        return np.concatenate(parts, axis=-1)

    def h(self, x, u):
        x, u = np.asarray(x, float), np.asarray(u, float)
        parts = []
        for dev, xs, us in zip(self.devices, self.x_slices, self.u_slices):
            if isinstance(dev, StaticBusModel):
                parts.append(dev.h(u[..., us]))
            else:
                parts.append(dev.h(x[..., xs], u[..., us]))
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        return np.concatenate([np.broadcast_to(p, batch + p.shape[-1:]) for p in parts], axis=-1)

    def g(self, x, u):
        return np.asarray(u, float) + self.h(x, u) @ self.C.T

    def jacobians(self, x, u):
        """Block Jacobians ``(f_x, f_u, h_x, h_u)`` of the stacked system."""
        x, u = np.asarray(x, float), np.asarray(u, float)
        batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        fx = np.zeros(batch + (self.n, self.n))
        fu = np.zeros(batch + (self.n, self.m))
        hx = np.zeros(batch + (self.m, self.n))
        hu = np.zeros(batch + (self.m, self.m))
        for dev, xs, us in zip(self.devices, self.x_slices, self.u_slices):
            if isinstance(dev, StaticBusModel):
                hu[..., us, us] = dev.jacobian(u[..., us])
            else:
                a, b, c, d = dev.jacobians(x[..., xs], u[..., us])
                fx[..., xs, xs] = a
                fu[..., xs, us] = b
                hx[..., us, xs] = c
                hu[..., us, us] = d
        return fx, fu, hx, hu

    def g_u(self, x, u):
        _, _, _, hu = self.jacobians(x, u)
        return np.eye(self.m) + self.C @ hu

    def full_jacobian(self, x, u):
        """``[[f_x, f_u], [g_x, g_u]]``."""
        fx, fu, hx, hu = self.jacobians(x, u)
        gx = self.C @ hx
        gu = np.eye(self.m) + self.C @ hu
        top = np.concatenate([fx, fu], axis=-1)
        bot = np.concatenate([gx, gu], axis=-1)
        return np.concatenate([top, bot], axis=-2)


# --------------------------------------------------------------------------
# algebraic manifold

CONVERGED, SINGULAR, NO_CONVERGENCE, DOMAIN = 0, 1, 2, 3


def _safe_solve(A, b, tol=1e-14):
    """Batched ``A^-1 b``; rows with (near) singular ``A`` come back as NaN."""
    out = np.full(b.shape, np.nan)
    if len(A) == 0:
        return out, np.zeros(0, bool)
    scale = np.max(np.abs(A), axis=(-2, -1)) + 1e-300
    det = np.abs(np.linalg.det(A / scale[:, None, None]))
    ok = det > tol
    if np.any(ok):
        out[ok] = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    return out, ok


def solve_algebraic_batch(assembly, x, u_guess, tol=ALG_TOL, maxiter=50):
    """Damped Newton on ``g(x, .) = 0`` for a batch of states.

    Returns ``(u, status, residual)`` with status codes ``CONVERGED``,
    ``SINGULAR``, ``NO_CONVERGENCE`` or ``DOMAIN``.
    """
    x = np.atleast_2d(np.asarray(x, float))
    u = np.array(np.broadcast_to(np.asarray(u_guess, float), (len(x), assembly.m)))
    status = np.full(len(x), NO_CONVERGENCE)
    dom = assembly.domain_mask(x, u)
    status[~dom] = DOMAIN
    res = np.full(len(x), np.inf)
    active = np.flatnonzero(dom)
    if active.size:
        res[active] = np.max(np.abs(assembly.g(x[active], u[active])), axis=-1)
    for _ in range(maxiter + 1):
        done = res[active] <= tol
        status[active[done]] = CONVERGED
        active = active[~done]
        if active.size == 0:
            break
        xa, ua = x[active], u[active]
        ga = assembly.g(xa, ua)
        step, ok = _safe_solve(assembly.g_u(xa, ua), -ga)
        status[active[~ok]] = SINGULAR
        active, xa, ua, step, r0 = active[ok], xa[ok], ua[ok], step[ok], res[active[ok]]
        t = np.ones(active.size)
        pending = np.arange(active.size)
        for _ in range(30):
            if pending.size == 0:
                break
            trial = ua[pending] + t[pending, None] * step[pending]
            xa_p = xa[pending]
            inside = assembly.domain_mask(xa_p, trial)
            rt = np.full(pending.size, np.inf)
            if np.any(inside):
                rt[inside] = np.max(np.abs(assembly.g(xa_p[inside], trial[inside])), axis=-1)
            accept = rt <= (1.0 - 1e-4 * t[pending]) * r0[pending]
            idx = pending[accept]
            u[active[idx]] = trial[accept]
            res[active[idx]] = rt[accept]
            pending = pending[~accept]
            t[pending] *= 0.5
        # no descent from the Newton direction: give up on those samples
        stuck = active[pending]
        status[stuck] = NO_CONVERGENCE
        active = np.setdiff1d(active, stuck, assume_unique=True)
    return u, status, res


def solve_algebraic(assembly, x, u_guess, tol=ALG_TOL, maxiter=50):
    """Consistent algebraic state for one ``x``.

    Raises
    ------
    WellPosednessError
        If ``g_u`` becomes singular.
    AlgebraicSolveError
        If Newton does not converge (or leaves a device domain).
    """
    u, status, res = solve_algebraic_batch(assembly, np.asarray(x, float)[None], u_guess, tol, maxiter)
    if status[0] == SINGULAR:
        raise WellPosednessError("dg/du is singular; the algebraic equations are not well posed here")
    if status[0] != CONVERGED:
        raise AlgebraicSolveError(f"no consistent algebraic state (residual {res[0]:.3g})")
    return u[0]


def reduced_flow_jacobian(assembly, x, u):
    """``f_x - f_u g_u^{-1} g_x`` at one point."""
    fx, fu, hx, hu = assembly.jacobians(x, u)
    gu = np.eye(assembly.m) + assembly.C @ hu
    gx = assembly.C @ hx
    try:
        return fx - fu @ np.linalg.solve(gu, gx)
    except np.linalg.LinAlgError:
        raise WellPosednessError("dg/du is singular") from None


# --------------------------------------------------------------------------
# simulation

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    algebraics: np.ndarray
    residuals: np.ndarray
    scales: np.ndarray = None
    error: str = None

    @property
    def ok(self):
        return self.error is None

    def write_csv(self, path):
        write_trajectory_csv(path, self)


def write_trajectory_csv(path, traj):
    n, m = traj.states.shape[1], traj.algebraics.shape[1]
    header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"u_{i + 1}" for i in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, x, u in zip(traj.times, traj.states, traj.algebraics):
            w.writerow([f"{v:.15g}" for v in np.concatenate([[t], x, u])])


def _trapezoid_step(asm, x0, f0, u0, dt, tol, maxiter=25):
    x = x0 + dt * f0
    u = solve_algebraic(asm, x, u0, tol)
    for _ in range(maxiter):
        r = x - x0 - 0.5 * dt * (f0 + asm.f(x, u))
        if np.max(np.abs(r)) <= tol:
            return x, u
        J = np.eye(asm.n) - 0.5 * dt * reduced_flow_jacobian(asm, x, u)
        x = x - np.linalg.solve(J, r)
        u = solve_algebraic(asm, x, u, tol)
    raise AlgebraicSolveError("implicit trapezoid iteration did not converge")


def simulate(assembly, x0, t_end, dt, u0=None, events=(), tol=1e-12):
    """Fixed-step implicit trapezoid with a nested algebraic solve.

    ``events`` is a sequence of ``(time, load_scale)``; the scale switches at
    the first step boundary at or after ``time``.  A failed solve truncates
    the trajectory and sets ``error``.
    """
    if not dt > 0 or not t_end > 0:
        raise InvalidInputError("dt and t_end must be positive")
    x = np.asarray(x0, float)
    if x.shape != (assembly.n,):
        raise DimensionMismatchError(f"x0 has shape {x.shape}, expected ({assembly.n},)")
    evs = sorted((float(t), float(s)) for t, s in events)
    asm, scale = assembly, 1.0
    while evs and evs[0][0] <= 0.0:
        scale = evs.pop(0)[1]
        asm = assembly.with_load_scale(scale)
    u = solve_algebraic(asm, x, np.zeros(asm.m) if u0 is None else u0, tol)
    steps = int(round(t_end / dt))
    times, xs, us, res, scales = [0.0], [x], [u], [np.max(np.abs(asm.g(x, u)))], [scale]
    error = None
    for k in range(1, steps + 1):
        t_prev = (k - 1) * dt
        while evs and evs[0][0] <= t_prev + 1e-12:
            scale = evs.pop(0)[1]
            asm = assembly.with_load_scale(scale)
            try:
                u = solve_algebraic(asm, x, u, tol)
            except (AlgebraicSolveError, WellPosednessError) as exc:
                error = f"t={t_prev:.6g}: {exc}"
                break
        if error:
            break
        try:
            x, u = _trapezoid_step(asm, x, asm.f(x, u), u, dt, tol)
        except (AlgebraicSolveError, WellPosednessError, np.linalg.LinAlgError) as exc:
            error = f"t={k * dt:.6g}: {exc}"
            break
        times.append(k * dt)
        xs.append(x)
        us.append(u)
        res.append(np.max(np.abs(asm.g(x, u))))
        scales.append(scale)
    return Trajectory(np.array(times), np.array(xs), np.array(us), np.array(res), np.array(scales), error)


# --------------------------------------------------------------------------
# equilibria

@dataclass
class EquilibriumPoint:
    x_star: np.ndarray
    u_star: np.ndarray
    f_residual: float
    g_residual: float
    eigenvalues: np.ndarray
    classification: str
    membership: dict = field(default_factory=dict)

    @property
    def max_real(self):
        return float(np.max(self.eigenvalues.real)) if self.eigenvalues.size else -np.inf

    def as_vector(self):
        return np.concatenate([self.x_star, self.u_star])

    def summary(self):
        out = {
            "x_star": [float(v) for v in self.x_star],
            "u_star": [float(v) for v in self.u_star],
            "f_residual": float(self.f_residual),
            "g_residual": float(self.g_residual),
            "eigenvalues": [[float(e.real), float(e.imag)] for e in self.eigenvalues],
            "max_re_lambda": self.max_real,
            "classification": self.classification,
        }
        if self.membership:
            out["membership"] = {str(k): bool(v) for k, v in self.membership.items()}
        return out


def classify(eigs, eig_tol=EIG_TOL):
    mr = float(np.max(np.real(eigs))) if len(eigs) else -np.inf
    if mr < -eig_tol:
        return "stable"
    return "unstable" if mr > eig_tol else "marginal"


def reduced_jacobian(assembly, x, u, eig_tol=EIG_TOL):
    """Return ``(A_red, eigenvalues, classification)`` at ``(x, u)``."""
    A = reduced_flow_jacobian(assembly, np.asarray(x, float), np.asarray(u, float))
    eigs = np.linalg.eigvals(A)
    return A, eigs, classify(eigs, eig_tol)


def find_equilibrium(assembly, x_seed, u_seed, tol=ALG_TOL, maxiter=60, eig_tol=EIG_TOL):
    """Damped Newton on ``[f; g] = 0`` from a seed.

    Raises
    ------
    EquilibriumNotFoundError
        If Newton fails to converge from the seed.
    """
    n = assembly.n
    z = np.concatenate([np.asarray(x_seed, float), np.asarray(u_seed, float)])
    if z.shape != (n + assembly.m,) or not np.all(np.isfinite(z)):
        raise InvalidInputError("seed must be finite and match system dimensions")

    def resid(v):
        if not assembly.domain_mask(v[:n], v[n:]):
            return None
        return np.concatenate([assembly.f(v[:n], v[n:]), assembly.g(v[:n], v[n:])])

    r = resid(z)
    if r is None:
        raise EquilibriumNotFoundError("seed lies outside a device domain")
    rn = np.max(np.abs(r))
    for _ in range(maxiter):
        if rn <= tol:
            break
        J = assembly.full_jacobian(z[:n], z[n:])
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            raise EquilibriumNotFoundError("singular Jacobian during equilibrium search") from None
        t = 1.0
        while t >= 2.0 ** -10:
            trial = z + t * step
            rt = resid(trial)
            if rt is not None and np.max(np.abs(rt)) <= (1 - 1e-4 * t) * rn:
                z, r, rn = trial, rt, np.max(np.abs(rt))
                break
            t *= 0.5
        else:
            raise EquilibriumNotFoundError(f"Newton stalled at residual {rn:.3g}")
    if rn > tol:
        raise EquilibriumNotFoundError(f"no convergence in {maxiter} iterations (residual {rn:.3g})")
    x, u = z[:n], z[n:]
    _, eigs, cls = reduced_jacobian(assembly, x, u, eig_tol)
    return EquilibriumPoint(
        x, u, float(np.max(np.abs(assembly.f(x, u)), initial=0.0)),
        float(np.max(np.abs(assembly.g(x, u)))), eigs, cls,
    )


def deduplicate(points, tol=DEDUP_TOL):
    """Drop equilibria within ``tol`` (max-norm) of an earlier one."""
    kept = []
    for p in points:
        if all(np.max(np.abs(p.as_vector() - q.as_vector())) > tol for q in kept):
            kept.append(p)
    return kept


def find_equilibria(assembly, seeds, **kw):
    """Run :func:`find_equilibrium` from every seed; failures are skipped."""
    found, failures = [], []
    for xs, us in seeds:
        try:
            found.append(find_equilibrium(assembly, xs, us, **kw))
        except EquilibriumNotFoundError as exc:
            failures.append(str(exc))
    return deduplicate(found), failures


@dataclass
class SweepRow:
    s: float
    equilibrium: EquilibriumPoint
    flags: tuple


@dataclass
class SweepResult:
    rows: list
    truncated_low: bool = False
    truncated_high: bool = False
    messages: list = field(default_factory=list)

    def window(self, predicate):
        """Contiguous ``[s_lo, s_hi]`` around ``s = 1`` where ``predicate(row)`` holds, or None."""
        ss = [r.s for r in self.rows]
        if not ss:
            return None
        i0 = int(np.argmin(np.abs(np.asarray(ss) - 1.0)))
        if not predicate(self.rows[i0]):
            return None
        lo = hi = i0
        while lo > 0 and predicate(self.rows[lo - 1]):
            lo -= 1
        while hi < len(self.rows) - 1 and predicate(self.rows[hi + 1]):
            hi += 1
        return self.rows[lo].s, self.rows[hi].s


def continuation_sweep(assembly, s_values, x_seed, u_seed, membership=None, eig_tol=EIG_TOL):
    """Natural-parameter continuation in the load scale ``s``.

    The branch starts from the equilibrium at ``s = 1`` and marches outward
    in both directions; the previous point seeds the next solve.  A failed
    solve (fold) truncates that direction.  ``membership(assembly_s, x, u)``
    returns per-bus region flags.
    """
    s_values = np.unique(np.round(np.asarray(s_values, float), 12))
    base = find_equilibrium(assembly.with_load_scale(1.0), x_seed, u_seed, eig_tol=eig_tol)
    up = s_values[s_values >= 1.0]
    down = s_values[s_values < 1.0][::-1]
    result = SweepResult([])
    for direction, seq in (("high", up), ("low", down)):
        prev = base
        for s in seq:
            asm = assembly.with_load_scale(s)
            try:
                eq = find_equilibrium(asm, prev.x_star, prev.u_star, eig_tol=eig_tol)
            except EquilibriumNotFoundError as exc:
                setattr(result, f"truncated_{direction}", True)
                result.messages.append(f"s={s:.6g}: {exc}")
                break
            flags = tuple(membership(asm, eq.x_star, eq.u_star)) if membership else ()
            result.rows.append(SweepRow(float(s), eq, flags))
            prev = eq
    result.rows.sort(key=lambda r: r.s)
    return result


def write_sweep_csv(path, result, bus_labels):
    if not result.rows:
        raise InvalidInputError("empty sweep")
    n = result.rows[0].equilibrium.x_star.size
    header = ["s"] + [f"x_star_{i + 1}" for i in range(n)] + [f"in_{b}" for b in bus_labels] + ["max_Re_lambda"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in result.rows:
            eq = row.equilibrium
            w.writerow([f"{row.s:.15g}"] + [f"{v:.15g}" for v in eq.x_star]
                       + [str(int(bool(f))) for f in row.flags] + [f"{eq.max_real:.15g}"])
