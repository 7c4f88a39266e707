"""Bus device models.

Every evaluator broadcasts over leading batch axes: ``x`` has shape
``(..., n)`` and ``u`` shape ``(..., m)``; Jacobians come back as
``(..., rows, cols)``.
"""

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError, SingularLoadError


class PortConvention(str, Enum):
    """Which port variable a bus consumes.

    ``VOLTAGE_IN``: ``u = (V_D, V_Q)``, ``y = -(I_D, I_Q)``.
    ``CURRENT_IN``: ``u = -(I_D, I_Q)``, ``y = (V_D, V_Q)``.
    """

    VOLTAGE_IN = "voltage-in-current-out"
    CURRENT_IN = "current-in-voltage-out"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"voltage-in": cls.VOLTAGE_IN, "current-in": cls.CURRENT_IN}
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            raise InvalidInputError(f"unknown port convention {value!r}") from None


class DynamicBusModel:
    """``dx/dt = f(x, u)``, ``y = h(x, u)``.

    Subclasses set ``state_dim``, ``port_dim`` and ``port`` and implement
    ``f``, ``h`` and ``jacobians``.
    """

    kind = "dynamic"
    type_tag = None
    state_dim: int
    port_dim: int
    port: PortConvention

    def f(self, x, u):
        raise NotImplementedError

    def h(self, x, u):
        raise NotImplementedError

    def jacobians(self, x, u):
        """Return ``(df/dx, df/du, dh/dx, dh/du)``."""
        raise NotImplementedError

    def domain_mask(self, x, u):
        """Boolean mask of points where the evaluators are defined."""
        return np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]), dtype=bool)

    @property
    def params(self):
        return {}


class StaticBusModel:
    """``y = h(u)``."""

    kind = "static"
    type_tag = None
    state_dim = 0
    port_dim: int
    port: PortConvention

    def h(self, u):
        raise NotImplementedError

    def jacobian(self, u):
        raise NotImplementedError

    def domain_mask(self, u):
        return np.ones(np.shape(u)[:-1], dtype=bool)

    @property
    def params(self):
        return {}


# --------------------------------------------------------------------------
# synchronous generator, flux-decay model

ROTATIONS = {"delta": 0.0, "delta-pi/2": -0.5 * np.pi}


@dataclass(frozen=True)
class SGParams:
    """Per-unit machine data plus the frame conventions of the model.

    ``rotation`` selects the machine-frame angle ``theta`` (``delta`` or
    ``delta - pi/2``) used in ``V_dq = exp(-j theta) V_DQ``.
    ``field_current`` picks which machine-frame current drives the field
    equation, and ``integral_sign`` the sign of the ``K_I * delta`` term.
    The defaults reproduce the printed model literally.
    """

    M: float = 0.41
    D: float = 0.3
    Td0: float = 5.4
    xd: float = 0.67
    xq: float = 0.40
    xdp: float = 0.13
    Pm: float = 0.48
    Ef: float = 1.11
    KI: float = 0.5
    rotation: str = "delta"
    field_current: str = "d"
    integral_sign: int = 1

    def __post_init__(self):
        for name in ("M", "D", "Td0", "xd", "xq", "xdp", "Pm", "Ef", "KI"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidInputError(f"SG parameter {name} must be finite")
        if self.M <= 0 or self.Td0 <= 0 or self.xq <= 0 or self.xdp <= 0:
            raise InvalidInputError("SG parameters need M, Td0, xq, xdp > 0")
        if self.KI < 0:
            raise InvalidInputError("K_I must be non-negative")
        if self.rotation not in ROTATIONS:
            raise InvalidInputError(f"rotation must be one of {sorted(ROTATIONS)}")
        if self.field_current not in ("d", "q"):
            raise InvalidInputError("field_current must be 'd' or 'q'")
        if self.integral_sign not in (1, -1):
            raise InvalidInputError("integral_sign must be +1 or -1")

    @property
    def convention(self):
        return (self.rotation, self.field_current, self.integral_sign)


class FluxDecayGenerator(DynamicBusModel):
    """Third-order flux-decay machine with a frequency-integral term.

    State ``(delta, omega, E'_q)``; voltage in, negated common-frame current out.
    Machine-frame algebra: ``V_d = E'_q + x'_d I_q``, ``V_q = -x_q I_d``,
    ``P_e = E'_q I_d + (x'_d - x_q) I_d I_q``.
    """

    type_tag = "sg_flux_decay"
    state_dim = 3
    port_dim = 2

    def __init__(self, params, port=PortConvention.VOLTAGE_IN):
        if PortConvention.parse(port) is not PortConvention.VOLTAGE_IN:
            raise InvalidInputError("sg_flux_decay only supports the voltage-in port")
        self.p = params
        self.port = PortConvention.VOLTAGE_IN
        self._shift = ROTATIONS[params.rotation]

    @property
    def params(self):
        return asdict(self.p)

    def _machine(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        delta, omega, eq = x[..., 0], x[..., 1], x[..., 2]
        th = delta + self._shift
        c, s = np.cos(th), np.sin(th)
        vD, vQ = u[..., 0], u[..., 1]
        vd = c * vD + s * vQ
        vq = -s * vD + c * vQ
        iq = (vd - eq) / self.p.xdp
        id_ = -vq / self.p.xq
        return delta, omega, eq, c, s, vd, vq, id_, iq

    def electrical_power(self, x, u):
        _, _, eq, _, _, _, _, id_, iq = self._machine(x, u)
        return eq * id_ + (self.p.xdp - self.p.xq) * id_ * iq

    def f(self, x, u):
        p = self.p
        delta, omega, eq, _, _, _, _, id_, iq = self._machine(x, u)
        pe = eq * id_ + (p.xdp - p.xq) * id_ * iq
        i_field = id_ if p.field_current == "d" else iq
        return np.stack(
            [
                omega,
                (-p.D * omega - pe + p.Pm + p.integral_sign * p.KI * delta) / p.M,
                (-eq + i_field * (p.xd - p.xdp) + p.Ef) / p.Td0,
            ],
            axis=-1,
        )

    def h(self, x, u):
        _, _, _, c, s, _, _, id_, iq = self._machine(x, u)
        return np.stack([-(c * id_ - s * iq), -(s * id_ + c * iq)], axis=-1)

    def jacobians(self, x, u):
        p = self.p
        delta, omega, eq, c, s, vd, vq, id_, iq = self._machine(x, u)
        shape = np.shape(delta)
        z, one = np.zeros(shape), np.ones(shape)
        # partials with respect to (delta, omega, E'q, V_D, V_Q)
        d_vd = np.stack([vq, z, z, c, s], axis=-1)
        d_vq = np.stack([-vd, z, z, -s, c], axis=-1)
        e_eq = np.stack([z, z, one, z, z], axis=-1)
        e_delta = np.stack([one, z, z, z, z], axis=-1)
        e_omega = np.stack([z, one, z, z, z], axis=-1)
        d_iq = (d_vd - e_eq) / p.xdp
        d_id = -d_vq / p.xq
        k = p.xdp - p.xq
        d_pe = (id_[..., None] * e_eq + (eq + k * iq)[..., None] * d_id
                + (k * id_)[..., None] * d_iq)
        d_ifield = d_id if p.field_current == "d" else d_iq
        row0 = e_omega
        row1 = (-p.D * e_omega - d_pe + p.integral_sign * p.KI * e_delta) / p.M
        row2 = (-e_eq + (p.xd - p.xdp) * d_ifield) / p.Td0
        d_iD = (-s * id_ - c * iq)[..., None] * e_delta + c[..., None] * d_id - s[..., None] * d_iq
        d_iQ = (c * id_ - s * iq)[..., None] * e_delta + s[..., None] * d_id + c[..., None] * d_iq
        jf = np.stack([row0, row1, row2], axis=-2)
        jh = -np.stack([d_iD, d_iQ], axis=-2)
        return jf[..., :3], jf[..., 3:], jh[..., :3], jh[..., 3:]


def sg_flux_decay(params=None, port=PortConvention.VOLTAGE_IN):
    return FluxDecayGenerator(params if params is not None else SGParams(), port)


# --------------------------------------------------------------------------
# constant-power load

I_MIN = 1e-6


@dataclass(frozen=True)
class PQLoadParams:
    P: float
    Q: float
    scale: float = 1.0
    i_min: float = I_MIN

    def __post_init__(self):
        if not (np.isfinite(self.P) and np.isfinite(self.Q) and np.isfinite(self.scale)):
            raise InvalidInputError("load parameters must be finite")
        if self.scale <= 0:
            raise InvalidInputError("load scale must be positive")
        if self.i_min <= 0:
            raise InvalidInputError("i_min must be positive")


class ConstantPowerLoad(StaticBusModel):
    """Load drawing ``s (P + jQ) = V conj(I_draw)``.

    Current in (``u = I_draw = -I_injection``), voltage out.
    """

    type_tag = "pq_load"
    port_dim = 2

    def __init__(self, params, port=PortConvention.CURRENT_IN):
        if PortConvention.parse(port) is not PortConvention.CURRENT_IN:
            raise InvalidInputError("pq_load only supports the current-in port")
        self.p = params
        self.port = PortConvention.CURRENT_IN

    @property
    def params(self):
        return asdict(self.p)

    @property
    def power(self):
        return self.p.scale * complex(self.p.P, self.p.Q)

    def with_scale(self, scale):
        return ConstantPowerLoad(PQLoadParams(self.p.P, self.p.Q, scale, self.p.i_min))

    def domain_mask(self, u):
        u = np.asarray(u, dtype=float)
        return np.hypot(u[..., 0], u[..., 1]) >= self.p.i_min

    def _check(self, u):
        if not np.all(self.domain_mask(u)):
            raise SingularLoadError(f"load current magnitude below i_min={self.p.i_min}")

    def h(self, u):
        u = np.asarray(u, dtype=float)
        self._check(u)
        v = self.power / (u[..., 0] - 1j * u[..., 1])
        return np.stack([v.real, v.imag], axis=-1)

    def jacobian(self, u):
        u = np.asarray(u, dtype=float)
        self._check(u)
        k = -self.power / (u[..., 0] - 1j * u[..., 1]) ** 2
        kr, ki = k.real, k.imag
        return np.stack([np.stack([kr, ki], -1), np.stack([ki, -kr], -1)], -2)

    def power_residual(self, u):
        """``V conj(I_draw) - s (P + jQ)`` as a complex array."""
        v = self.h(u)
        return (v[..., 0] + 1j * v[..., 1]) * (u[..., 0] - 1j * u[..., 1]) - self.power


def pq_load(params, port=PortConvention.CURRENT_IN):
    return ConstantPowerLoad(params, port)


# --------------------------------------------------------------------------
# linear test devices

class LinearDevice(DynamicBusModel):
    """``dx/dt = A x + B u``, ``y = C x + D u``."""

    type_tag = "linear"

    def __init__(self, A, B, C, D=None, port=PortConvention.VOLTAGE_IN):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        n, m = self.B.shape
        self.D = np.zeros((m, m)) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
        if self.A.shape != (n, n) or self.C.shape != (m, n) or self.D.shape != (m, m):
            raise InvalidInputError("inconsistent linear device matrices")
        self.state_dim, self.port_dim = n, m
        self.port = PortConvention.parse(port)

    @property
    def params(self):
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist(), "D": self.D.tolist()}

    def f(self, x, u):
        return np.asarray(x, float) @ self.A.T + np.asarray(u, float) @ self.B.T

    def h(self, x, u):
        return np.asarray(x, float) @ self.C.T + np.asarray(u, float) @ self.D.T

    def jacobians(self, x, u):
        batch = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return tuple(np.broadcast_to(M, batch + M.shape).copy() for M in (self.A, self.B, self.C, self.D))


class LinearLag(LinearDevice):
    """Scalar lag ``dx/dt = (-x + gain u) / tau``, ``y = x``."""

    type_tag = "linear_lag"

    def __init__(self, tau, gain, port=PortConvention.VOLTAGE_IN):
        if not tau > 0:
            raise InvalidInputError("tau must be positive")
        super().__init__([[-1.0 / tau]], [[gain / tau]], [[1.0]], [[0.0]], port)
        self.tau, self.gain = float(tau), float(gain)

    @property
    def params(self):
        return {"tau": self.tau, "gain": self.gain}


def linear_lag_device(tau, gain, port=PortConvention.VOLTAGE_IN):
    return LinearLag(tau, gain, port)


class LinearStatic(StaticBusModel):
    """``y = R u``; the identity map when ``R`` is omitted."""

    type_tag = "linear_static"

    def __init__(self, R=None, port_dim=None, port=PortConvention.CURRENT_IN):
        if R is None:
            R = np.eye(port_dim or 1)
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        if self.R.shape[0] != self.R.shape[1]:
            raise InvalidInputError("R must be square")
        self.port_dim = self.R.shape[0]
        self.port = PortConvention.parse(port)

    @property
    def params(self):
        return {"R": self.R.tolist()}

    def h(self, u):
        return np.asarray(u, float) @ self.R.T

    def jacobian(self, u):
        batch = np.shape(u)[:-1]
        return np.broadcast_to(self.R, batch + self.R.shape).copy()
