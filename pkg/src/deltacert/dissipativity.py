"""Delta-dissipativity checks with Krasovskii storage ``S = f^T P f``.

Dynamic buses use the pointwise matrix

    Q = [[Jx^T P + P Jx + eps I, P Ju], [Ju^T P, 0]] - T^T X T,
    T = [[0, I], [Hx, Hu]],

which maps ``col(f, du)`` to ``col(du, dy)``.  Since ``dS/dt = 2 f^T P (Jx f + Ju du)``
and ``w = col(du, dy)^T X col(du, dy)``, ``Q <= 0`` at ``(x, u)`` gives
``dS/dt <= w - eps |f|^2`` for every input rate ``du``.  Static buses use
``[I; Hu]^T X [I; Hu] >= 0``.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels_py, kernels
from .devices import DynamicBusModel, StaticBusModel
from .errors import DimensionMismatchError, InvalidInputError, InvalidStorageError
from .linalg import PSD_TOL, BoxRegion, SymmetricMatrix, lambda_extremes

DEFAULT_EPS = 1e-4
CHUNK = 65536


@dataclass(frozen=True)
class ClassKQuadratic:
    """``r -> a r^2``."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidInputError("class-K coefficient must be positive")

    def __call__(self, r):
        return self.a * np.square(r)


@dataclass(frozen=True)
class BusCertificate:
    """Certificate data for one bus: storage ``P`` (dynamic only), supply ``X``, ``eps`` and box.

    The dissipative region is the set of box points where the pointwise
    matrix condition holds.
    """

    P: SymmetricMatrix = None
    X: SymmetricMatrix = None
    epsilon: float = DEFAULT_EPS
    region: BoxRegion = None

    def __post_init__(self):
        if self.X is None:
            raise InvalidInputError("supply matrix X is required")
        if not isinstance(self.X, SymmetricMatrix):
            object.__setattr__(self, "X", SymmetricMatrix(self.X))
        if self.P is not None and not isinstance(self.P, SymmetricMatrix):
            object.__setattr__(self, "P", SymmetricMatrix(self.P))
        if not self.epsilon > 0:
            raise InvalidInputError("epsilon must be positive")

    @property
    def dynamic(self):
        return self.P is not None


def _check_storage(P):
    lo, _ = lambda_extremes(P)
    if not lo > 0:
        raise InvalidStorageError(f"storage matrix P must be positive definite (lambda_min = {lo:.3g})")


def _check_dims(device, P, X):
    n, m = device.state_dim, device.port_dim
    if P is not None and np.shape(P) != (n, n):
        raise DimensionMismatchError(f"P has shape {np.shape(P)}, device state dim is {n}")
    if np.shape(X) != (2 * m, 2 * m):
        raise DimensionMismatchError(f"X has shape {np.shape(X)}, expected {(2 * m, 2 * m)}")


def build_Q(device, P, X, epsilon, x, u):
    """Pointwise dissipation matrix at ``(x, u)`` (size ``n + m``)."""
    P, X = np.asarray(P, float), np.asarray(X, float)
    _check_dims(device, P, X)
    x = np.asarray(x, float).reshape(1, -1)
    u = np.asarray(u, float).reshape(1, -1)
    if x.shape[1] != device.state_dim or u.shape[1] != device.port_dim:
        raise DimensionMismatchError("point does not match device dimensions")
    jx, ju, hx, hu = device.jacobians(x, u)
    q = _kernels_py.dissipation_matrices(jx, ju, hx, hu, P, X, float(epsilon))[0]
    return SymmetricMatrix(q)


def dynamic_lmax(device, P, X, epsilon, x, u):
    """Batched ``lambda_max(Q)``; ``+inf`` where the device is undefined."""
    x = np.atleast_2d(np.asarray(x, float))
    u = np.atleast_2d(np.asarray(u, float))
    out = np.full(len(x), np.inf)
    ok = device.domain_mask(x, u) & np.all(np.isfinite(x), -1) & np.all(np.isfinite(u), -1)
    if np.any(ok):
        jx, ju, hx, hu = device.jacobians(x[ok], u[ok])
        out[ok] = kernels.krasovskii_lmax(jx, ju, hx, hu, np.asarray(P, float), np.asarray(X, float), epsilon)
    return out


def static_lmin(device, X, u):
    """Batched ``lambda_min([I; Hu]^T X [I; Hu])``; ``-inf`` where undefined."""
    u = np.atleast_2d(np.asarray(u, float))
    out = np.full(len(u), -np.inf)
    ok = device.domain_mask(u) & np.all(np.isfinite(u), -1)
    if np.any(ok):
        out[ok] = kernels.static_lmin(device.jacobian(u[ok]), np.asarray(X, float))
    return out


def pointwise_margin(device, cert, x=None, u=None, psd_tol=PSD_TOL):
    """Signed margin of the pointwise condition (``>= -psd_tol`` means it holds).

    Dynamic: ``-lambda_max(Q)``; static: ``lambda_min``.
    """
    if isinstance(device, StaticBusModel):
        return static_lmin(device, cert.X, u)
    return -dynamic_lmax(device, cert.P, cert.X, cert.epsilon, x, u)


def exact_deficit(device, P, X, epsilon, x, u, psd_tol=PSD_TOL):
    """Supremum over input rates of ``dS/dt - w + eps |f|^2`` at each sample.

    Returns ``+inf`` where the ``du``-block of ``Q`` has a positive
    direction (or ``B^T f`` leaves its range), so the supremum is unbounded.
    """
    x = np.atleast_2d(np.asarray(x, float))
    u = np.atleast_2d(np.asarray(u, float))
    n = device.state_dim
    out = np.full(len(x), np.inf)
    ok = device.domain_mask(x, u)
    if not np.any(ok):
        return out
    jx, ju, hx, hu = device.jacobians(x[ok], u[ok])
    q = _kernels_py.dissipation_matrices(jx, ju, hx, hu, np.asarray(P, float), np.asarray(X, float), epsilon)
    f = device.f(x[ok], u[ok])
    A, B, Cq = q[:, :n, :n], q[:, :n, n:], q[:, n:, n:]
    cmax = np.linalg.eigvalsh(Cq)[:, -1]
    Cp = np.linalg.pinv(Cq, hermitian=True)
    bf = np.einsum("sij,si->sj", B, f)
    # component of B^T f outside range(Cq) makes the sup unbounded
    resid = bf - np.einsum("sij,sjk,sk->si", Cq, Cp, bf)
    scale = 1.0 + np.linalg.norm(bf, axis=-1)
    val = np.einsum("si,sij,sj->s", f, A, f) - np.einsum("si,sij,sj->s", bf, Cp, bf)
    bounded = (cmax <= psd_tol) & (np.linalg.norm(resid, axis=-1) <= 1e-9 * scale)
    out[np.flatnonzero(ok)[bounded]] = val[bounded]
    return out


def worst_case_udot(device, P, X, epsilon, x, u):
    """Maximizer ``du* = -Cq^+ B^T f`` of the dissipation deficit at one point."""
    n = device.state_dim
    q = np.asarray(build_Q(device, P, X, epsilon, x, u))
    f = device.f(np.asarray(x, float), np.asarray(u, float))
    B, Cq = q[:n, n:], q[n:, n:]
    return -np.linalg.pinv(Cq, hermitian=True) @ (B.T @ f)


def dissipation_terms(device, P, X, epsilon, x, u, udot):
    """Return ``(dS/dt, w, eps |f|^2)`` for a batch of input rates at one point."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    udot = np.atleast_2d(np.asarray(udot, float))
    P, X = np.asarray(P, float), np.asarray(X, float)
    f = device.f(x, u)
    jx, ju, hx, hu = device.jacobians(x, u)
    fdot = (jx @ f)[None, :] + udot @ ju.T
    sdot = 2.0 * fdot @ (P @ f)
    ydot = (hx @ f)[None, :] + udot @ hu.T
    z = np.concatenate([udot, ydot], axis=1)
    w = np.einsum("si,ij,sj->s", z, X, z)
    return sdot, w, epsilon * float(f @ f)


def brute_force_dissipation_check(device, P, X, epsilon, point, udot_samples=10_000, seed=0, tol=1e-8):
    """Check ``dS/dt <= w - eps |f|^2`` directly for sampled input rates.

    The draws include ``du = 0``, the analytic worst case when the ``du``-block
    of ``Q`` is negative definite, and ``udot_samples`` random rates spread
    over six decades of magnitude.  A draw fails when the violation exceeds
    ``tol`` times the size of the terms involved.
    """
    n, m = device.state_dim, device.port_dim
    point = np.asarray(point, float)
    x, u = point[:n], point[n:]
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((udot_samples, m))
    mags = 10.0 ** rng.uniform(-3, 3, size=(udot_samples, 1))
    draws = [np.zeros((1, m)), dirs * mags]
    q = np.asarray(build_Q(device, P, X, epsilon, x, u))
    if np.linalg.eigvalsh(q[n:, n:])[-1] < 0:
        draws.append(worst_case_udot(device, P, X, epsilon, x, u)[None, :])
    udot = np.concatenate(draws)
    sdot, w, gam = dissipation_terms(device, P, X, epsilon, x, u, udot)
    f = device.f(x, u)
    size = np.abs(sdot) + np.abs(w) + gam + float(f @ f) + np.sum(udot**2, axis=1)
    return bool(np.all(sdot - w + gam <= tol * size))


@dataclass
class DissipativityCertificate:
    """Outcome of a region check for one bus.

    ``margin`` is signed so that ``margin >= -psd_tol`` passes: ``-lambda_max(Q)``
    for dynamic buses, ``lambda_min`` of the static matrix otherwise.
    """

    bus: object
    kind: str
    P: SymmetricMatrix
    X: SymmetricMatrix
    epsilon: float
    region: BoxRegion
    mode: str
    verdict: str
    worst_margin: float
    worst_sample: np.ndarray
    pass_fraction: float
    n_samples: int
    failing: np.ndarray = field(repr=False)
    marginal: bool = False
    psd_tol: float = PSD_TOL
    alpha: ClassKQuadratic = None
    beta: ClassKQuadratic = None
    gamma: ClassKQuadratic = None

    @property
    def passed(self):
        return self.verdict == "pass"

    def summary(self, max_failing=20):
        out = {
            "bus": self.bus,
            "kind": self.kind,
            "mode": self.mode,
            "verdict": self.verdict,
            "marginal": self.marginal,
            "worst_margin": float(self.worst_margin),
            "worst_sample": [float(v) for v in self.worst_sample],
            "pass_fraction": float(self.pass_fraction),
            "n_samples": int(self.n_samples),
            "samples_per_axis": list(self.region.samples_per_axis),
            "n_failing": int(self.failing.size),
            "failing_samples": [int(i) for i in self.failing[:max_failing]],
            "X": self.X.tolist(),
        }
        if self.P is not None:
            out["P"] = self.P.tolist()
            out["epsilon"] = float(self.epsilon)
            out["class_k"] = {"alpha": self.alpha.a, "beta": self.beta.a, "gamma": self.gamma.a}
        return out


def _verdict(ok):
    if ok.all():
        return "pass"
    return "fail" if not ok.any() else "partial"


def _chunked(fn, grid, threads):
    parts = [grid[i:i + CHUNK] for i in range(0, len(grid), CHUNK)] or [grid]
    if threads and threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(threads) as pool:
            res = list(pool.map(fn, parts))  # map keeps chunk order
    else:
        res = [fn(p) for p in parts]
    return np.concatenate(res)


def _certificate(bus, kind, P, X, eps, region, mode, margin, ok, grid, psd_tol):
    i = int(np.argmin(margin))
    worst = float(margin[i])
    return dict(
        bus=bus, kind=kind, P=P, X=X, epsilon=eps, region=region, mode=mode,
        verdict=_verdict(ok), worst_margin=worst, worst_sample=grid[i].copy(),
        pass_fraction=float(ok.mean()), n_samples=len(grid), failing=np.flatnonzero(~ok),
        marginal=bool(ok.all() and abs(worst) <= psd_tol), psd_tol=psd_tol,
    )


def verify_dynamic(device, P, X, region, epsilon=DEFAULT_EPS, mode="uniform", psd_tol=PSD_TOL,
                   bus=None, threads=1):
    """Check Definition-1 dissipativity of a dynamic bus on every sample of ``region``.

    ``region`` spans ``(x, u)`` (states first).  In ``exact`` mode samples
    failing the uniform test are re-examined with the deficit for their own
    ``f(x, u)``; that mode is diagnostic.

    Raises
    ------
    InvalidStorageError
        If ``P`` is not positive definite.
    """
    if not isinstance(device, DynamicBusModel):
        raise InvalidInputError("verify_dynamic needs a dynamic device")
    if mode not in ("uniform", "exact"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    P, X = SymmetricMatrix(P), SymmetricMatrix(X)
    _check_dims(device, P, X)
    _check_storage(P)
    n = device.state_dim
    if region.dim != n + device.port_dim:
        raise DimensionMismatchError(f"region has dim {region.dim}, expected {n + device.port_dim}")
    grid = region.grid()
    Pa, Xa = np.asarray(P), np.asarray(X)
    lmax = _chunked(lambda g: dynamic_lmax(device, Pa, Xa, epsilon, g[:, :n], g[:, n:]), grid, threads)
    margin = -lmax
    ok = margin >= -psd_tol
    if mode == "exact" and not ok.all():
        idx = np.flatnonzero(~ok)
        d = exact_deficit(device, Pa, Xa, epsilon, grid[idx, :n], grid[idx, n:], psd_tol)
        ok[idx[d <= psd_tol]] = True
    lo, hi = lambda_extremes(P)
    data = _certificate(bus, "dynamic", P, X, float(epsilon), region, mode, margin, ok, grid, psd_tol)
    return DissipativityCertificate(
        **data, alpha=ClassKQuadratic(lo), beta=ClassKQuadratic(hi), gamma=ClassKQuadratic(float(epsilon))
    )


def verify_static(device, X, region, psd_tol=PSD_TOL, bus=None, threads=1):
    """Check the static condition ``[I; Hu]^T X [I; Hu] >= 0`` over a ``u``-space box.

    Samples where the device cannot be evaluated are recorded as failures.
    """
    if not isinstance(device, StaticBusModel):
        raise InvalidInputError("verify_static needs a static device")
    X = SymmetricMatrix(X)
    _check_dims(device, None, X)
    if region.dim != device.port_dim:
        raise DimensionMismatchError(f"region has dim {region.dim}, expected {device.port_dim}")
    grid = region.grid()
    Xa = np.asarray(X)
    margin = _chunked(lambda g: static_lmin(device, Xa, g), grid, threads)
    ok = margin >= -psd_tol
    data = _certificate(bus, "static", None, X, None, region, "uniform", margin, ok, grid, psd_tol)
    return DissipativityCertificate(**data)


def aggregate_classK(weights, alphas, betas, gammas):
    """Closed-form aggregate class-K coefficients for quadratic members.

    ``alpha = min p_i a_i``, ``beta = sum p_i b_i``, ``gamma = min p_i c_i``.
    """
    p = np.asarray(weights, float)
    if p.size == 0:
        raise InvalidInputError("no subsystems to aggregate")
    if np.any(p <= 0):
        raise InvalidInputError("weights must be positive")

    def coeffs(v):
        v = np.asarray([c.a if isinstance(c, ClassKQuadratic) else c for c in v], float)
        if v.shape != p.shape:
            raise DimensionMismatchError("coefficient list length differs from weights")
        return v

    a, b, c = coeffs(alphas), coeffs(betas), coeffs(gammas)
    return (ClassKQuadratic(float(np.min(p * a))), ClassKQuadratic(float(np.sum(p * b))),
            ClassKQuadratic(float(np.min(p * c))))


__all__ = [
    "ClassKQuadratic", "BusCertificate", "DissipativityCertificate", "build_Q", "dynamic_lmax",
    "static_lmin", "pointwise_margin", "exact_deficit", "worst_case_udot", "dissipation_terms",
    "brute_force_dissipation_check", "verify_dynamic", "verify_static", "aggregate_classK",
    "DEFAULT_EPS",
]
