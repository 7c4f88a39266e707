"""Linear network coupling between bus ports.

Port vectors are stacked bus by bus, ``u = col(u_1, ..., u_N)`` with
``u_i = (D, Q)`` for power buses.  The admittance relation ``I = Y V`` is
written in block form on ``col(V_D, V_Q)`` (all D components first), which
is the layout of :func:`build_MY`.  The permutations ``A_I, B_I, A_V, B_V``
translate between the two.
"""

from dataclasses import dataclass, field

import numpy as np

from .devices import PortConvention
from .errors import DimensionMismatchError, IllPosedNetworkError, InvalidInputError
from .linalg import as_matrix

COND_LIMIT = 1e12


@dataclass(frozen=True)
class Branch:
    src: int
    dst: int
    r: float
    x: float
    b: float = 0.0  # total line-charging susceptance, split between both ends

    def __post_init__(self):
        if self.src == self.dst:
            raise InvalidInputError("branch endpoints must differ")
        if self.r < 0 or (self.r == 0 and self.x == 0):
            raise InvalidInputError("branch impedance must be non-zero with r >= 0")

    @property
    def admittance(self):
        return 1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class AdmittanceNetwork:
    """Bus admittance matrix ``Y = G + jB`` assembled from a branch list."""

    n_bus: int
    branches: tuple = ()
    shunts: dict = field(default_factory=dict)  # bus -> complex shunt admittance

    def __post_init__(self):
        if self.n_bus < 1:
            raise InvalidInputError("network needs at least one bus")
        for br in self.branches:
            for k in (br.src, br.dst):
                if not 0 <= k < self.n_bus:
                    raise InvalidInputError(f"branch references bus {k} outside 0..{self.n_bus - 1}")
        for k in self.shunts:
            if not 0 <= k < self.n_bus:
                raise InvalidInputError(f"shunt references bus {k} outside 0..{self.n_bus - 1}")

    @classmethod
    def from_branches(cls, n_bus, branches, shunts=None):
        brs = tuple(b if isinstance(b, Branch) else Branch(*b) for b in branches)
        return cls(n_bus, brs, dict(shunts or {}))

    def admittance(self):
        Y = np.zeros((self.n_bus, self.n_bus), dtype=complex)
        for br in self.branches:
            y = br.admittance
            i, j = br.src, br.dst
            Y[i, i] += y + 0.5j * br.b
            Y[j, j] += y + 0.5j * br.b
            Y[i, j] -= y
            Y[j, i] -= y
        for k, ysh in self.shunts.items():
            Y[k, k] += complex(ysh)
        return Y

    @property
    def G(self):
        return self.admittance().real

    @property
    def B(self):
        return self.admittance().imag


def build_MY(net):
    """``[[G, -B], [B, G]]`` acting on ``col(V_D, V_Q)``."""
    Y = net.admittance() if isinstance(net, AdmittanceNetwork) else np.asarray(net, dtype=complex)
    G, B = Y.real, Y.imag
    return np.block([[G, -B], [B, G]])


def build_port_permutations(conventions):
    """Return ``(A_I, B_I, A_V, B_V)`` for the given per-bus conventions.

    For stacked per-bus ``u`` and ``y``:
    ``A_I u + B_I y = col(-I_D, -I_Q)`` and ``A_V u + B_V y = col(V_D, V_Q)``.
    """
    conv = [PortConvention.parse(c) for c in conventions]
    N = len(conv)
    A_I, B_I, A_V, B_V = (np.zeros((2 * N, 2 * N)) for _ in range(4))
    for k, c in enumerate(conv):
        for a in range(2):  # a = 0 -> D, 1 -> Q
            row, col = a * N + k, 2 * k + a
            if c is PortConvention.VOLTAGE_IN:
                A_V[row, col] = 1.0
                B_I[row, col] = 1.0
            else:
                A_I[row, col] = 1.0
                B_V[row, col] = 1.0
    return A_I, B_I, A_V, B_V


def interleave_permutation(port_dims):
    """``P_pi`` with ``P_pi col(u, y) = col(u_1, y_1, ..., u_N, y_N)``."""
    dims = [int(d) for d in port_dims]
    m = sum(dims)
    P = np.zeros((2 * m, 2 * m))
    offs = np.concatenate([[0], np.cumsum(dims)])
    row = 0
    for k, d in enumerate(dims):
        for j in range(d):
            P[row + j, offs[k] + j] = 1.0
        row += d
        for j in range(d):
            P[row + j, m + offs[k] + j] = 1.0
        row += d
    return P


@dataclass(frozen=True)
class NetworkCoupling:
    """Constant coupling ``u = -C y`` so that ``g(x, u) = u + C h(x, u)``."""

    C: np.ndarray
    P_pi: np.ndarray
    port_dims: tuple
    M_Y: np.ndarray = None
    A_I: np.ndarray = None
    B_I: np.ndarray = None
    A_V: np.ndarray = None
    B_V: np.ndarray = None
    cond: float = 1.0

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def n_bus(self):
        return len(self.port_dims)

    def h_net(self, y):
        """Network map ``y -> u``."""
        return -np.asarray(y, dtype=float) @ self.C.T

    def bus_slices(self):
        offs = np.concatenate([[0], np.cumsum(self.port_dims)])
        return [slice(int(a), int(b)) for a, b in zip(offs[:-1], offs[1:])]


def build_C(net, conventions, cond_limit=COND_LIMIT):
    """Assemble the coupling for a power network.

    Returns a :class:`NetworkCoupling`; its ``cond`` field holds the
    condition number of ``A_I + M_Y A_V``.

    Raises
    ------
    IllPosedNetworkError
        If ``A_I + M_Y A_V`` is singular or worse conditioned than ``cond_limit``.
    """
    conventions = list(conventions)
    if len(conventions) != net.n_bus:
        raise DimensionMismatchError(f"{len(conventions)} conventions for {net.n_bus} buses")
    MY = build_MY(net)
    A_I, B_I, A_V, B_V = build_port_permutations(conventions)
    lhs = A_I + MY @ A_V
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllPosedNetworkError(
            f"A_I + M_Y A_V is singular (condition number {cond:.3g}); "
            "the port inputs do not form a complete set of circuit variables"
        )
    C = np.linalg.solve(lhs, B_I + MY @ B_V)
    dims = (2,) * net.n_bus
    return NetworkCoupling(C, interleave_permutation(dims), dims, MY, A_I, B_I, A_V, B_V, float(cond))


def coupling_from_matrix(C, port_dims):
    """Coupling given directly by ``C`` (test systems, non-power ports)."""
    dims = tuple(int(d) for d in port_dims)
    C = as_matrix(C, name="C")
    if C.shape != (sum(dims), sum(dims)):
        raise DimensionMismatchError(f"C has shape {C.shape}, port dims sum to {sum(dims)}")
    return NetworkCoupling(C, interleave_permutation(dims), dims)


def g_residual(x, u, assembly):
    """``u + C h(x, u)`` for the assembled system."""
    return assembly.g(x, u)


@dataclass
class WellPosednessReport:
    n_samples: int
    min_abs_det: float
    failures: np.ndarray  # sample indices with |det| <= tol
    tol: float

    @property
    def ok(self):
        return self.failures.size == 0


def wellposedness_scan(assembly, samples, tol=1e-9):
    """Evaluate ``det(I + C H_u)`` on ``samples`` of stacked ``(x, u)``.

    Samples where a device cannot be evaluated count as failures.
    """
    z = np.atleast_2d(np.asarray(samples, dtype=float))
    n = assembly.n
    x, u = z[:, :n], z[:, n:]
    ok = assembly.domain_mask(x, u)
    det = np.zeros(len(z))
    if np.any(ok):
        gu = assembly.g_u(x[ok], u[ok])
        det[ok] = np.linalg.det(gu)
    bad = np.flatnonzero(~ok | (np.abs(det) <= tol))
    min_abs = float(np.min(np.abs(det[ok]))) if np.any(ok) else float("nan")
    return WellPosednessReport(len(z), min_abs, bad, tol)
