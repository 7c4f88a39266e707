"""YAML configuration: schema validation with line/column errors, builders and round-trip dump.

The format is documented in ``docs/config.md``.  Parsing walks the composed
YAML node tree (not the loaded Python objects) so every validation error can
point at the offending line and column.  Numbers accept any ``float()``
spelling, including ``1e-4``.
"""

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .devices import (
    LinearDevice, LinearStatic, PQLoadParams, PortConvention, SGParams, linear_lag_device, pq_load,
    sg_flux_decay,
)
from .dissipativity import DEFAULT_EPS, BusCertificate
from .errors import ConfigError, DeltaCertError
from .linalg import DEFAULT_SAMPLE_CAP, PSD_TOL, BoxRegion
from .network import AdmittanceNetwork, Branch, build_C, coupling_from_matrix

SCHEMA_VERSION = 1
DEVICE_TYPES = ("sg_flux_decay", "pq_load", "linear_lag", "linear", "linear_static")
SG_KEYS = ("M", "D", "Td0", "xd", "xq", "xdp", "Pm", "Ef", "KI")


# --------------------------------------------------------------------------
# node walking

def _err(msg, path, node=None):
    if node is not None:
        return ConfigError(msg, path, node.start_mark.line + 1, node.start_mark.column + 1)
    return ConfigError(msg, path)


def _mapping(node, path, required=(), optional=()):
    if not isinstance(node, yaml.MappingNode):
        raise _err("expected a mapping", path, node)
    out = {}
    for k, v in node.value:
        if not isinstance(k, yaml.ScalarNode):
            raise _err("mapping keys must be scalars", path, k)
        if k.value in out:
            raise _err(f"duplicate key {k.value!r}", path + (k.value,), k)
        if k.value not in required and k.value not in optional:
            allowed = ", ".join(sorted(set(required) | set(optional)))
            raise _err(f"unknown key {k.value!r} (allowed: {allowed})", path + (k.value,), k)
        out[k.value] = v
    for key in required:
        if key not in out:
            raise _err(f"missing required key {key!r}", path, node)
    return out


def _seq(node, path):
    if not isinstance(node, yaml.SequenceNode):
        raise _err("expected a list", path, node)
    return node.value


def _float(node, path, positive=False, nonneg=False):
    if not isinstance(node, yaml.ScalarNode):
        raise _err("expected a number", path, node)
    try:
        v = float(node.value)
    except ValueError:
        raise _err(f"expected a number, got {node.value!r}", path, node) from None
    if not np.isfinite(v):
        raise _err("number must be finite", path, node)
    if positive and not v > 0:
        raise _err("must be positive", path, node)
    if nonneg and v < 0:
        raise _err("must be non-negative", path, node)
    return v


def _int(node, path, minimum=None):
    if not isinstance(node, yaml.ScalarNode):
        raise _err("expected an integer", path, node)
    try:
        v = int(node.value)
    except ValueError:
        raise _err(f"expected an integer, got {node.value!r}", path, node) from None
    if minimum is not None and v < minimum:
        raise _err(f"must be >= {minimum}", path, node)
    return v


def _str(node, path, choices=None):
    if not isinstance(node, yaml.ScalarNode):
        raise _err("expected a string", path, node)
    if choices is not None and node.value not in choices:
        raise _err(f"must be one of {', '.join(map(str, choices))}; got {node.value!r}", path, node)
    return node.value


def _bool(node, path):
    v = _str(node, path)
    if v.lower() in ("true", "yes", "on"):
        return True
    if v.lower() in ("false", "no", "off"):
        return False
    raise _err(f"expected true/false, got {v!r}", path, node)


def _vector(node, path, dim=None):
    items = _seq(node, path)
    v = [_float(n, path + (i,)) for i, n in enumerate(items)]
    if dim is not None and len(v) != dim:
        raise _err(f"expected {dim} entries, got {len(v)}", path, node)
    if not v:
        raise _err("must not be empty", path, node)
    return v


def _matrix(node, path, shape=None):
    rows = [_vector(r, path + (i,)) for i, r in enumerate(_seq(node, path))]
    if not rows:
        raise _err("matrix must not be empty", path, node)
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise _err(f"row {i} has {len(r)} entries, row 0 has {width}", path + (i,), node.value[i])
    if shape is not None and (len(rows), width) != tuple(shape):
        raise _err(f"expected a {shape[0]}x{shape[1]} matrix, got {len(rows)}x{width}", path, node)
    return rows


# --------------------------------------------------------------------------
# schema objects

@dataclass
class DeviceSpec:
    bus: int
    type: str
    port: str
    params: dict


@dataclass
class RegionSpec:
    lower: list
    upper: list
    samples: list

    def box(self, cap=DEFAULT_SAMPLE_CAP):
        return BoxRegion(self.lower, self.upper, tuple(self.samples), cap=cap)


@dataclass
class CertificateSpec:
    bus: int
    X: list
    P: list = None
    epsilon: float = DEFAULT_EPS
    region: RegionSpec = None


@dataclass
class NetworkSpec:
    buses: int
    branches: list = field(default_factory=list)  # dicts {from, to, r, x, b}
    shunts: list = field(default_factory=list)  # dicts {bus, g, b}
    coupling_matrix: list = None


@dataclass
class WeightsSpec:
    mode: str = "search"
    p: list = None
    strategy: str = "auto"
    iterations: int = 500
    grid_points: int = 21


@dataclass
class EngineSpec:
    dt: float = 0.01
    t_end: float = 100.0
    alg_tol: float = 1e-10
    psd_tol: float = PSD_TOL
    eig_tol: float = 1e-9
    sample_cap: int = DEFAULT_SAMPLE_CAP
    x0: list = None
    u0: list = None
    events: list = field(default_factory=list)  # [time, scale]


@dataclass
class RoASpec:
    region: RegionSpec
    x0: list = None
    margin: float = 1e-6


@dataclass
class SweepSpec:
    s_min: float = 0.7
    s_max: float = 1.6
    s_step: float = 0.005


@dataclass
class CalibrationSpec:
    target: list
    extra_targets: list = field(default_factory=list)
    r_range: list = field(default_factory=lambda: [0.01, 0.5, 0.01])
    x_range: list = field(default_factory=lambda: [0.01, 0.5, 0.01])
    tol: float = 5e-3
    refine: bool = True


@dataclass
class GridConfig:
    name: str
    network: NetworkSpec
    devices: list
    certificates: list
    weights: WeightsSpec = field(default_factory=WeightsSpec)
    engine: EngineSpec = field(default_factory=EngineSpec)
    equilibria: list = field(default_factory=list)  # seeds: stacked (x, u)
    roa: RoASpec = None
    sweep: SweepSpec = None
    calibration: CalibrationSpec = None
    version: int = SCHEMA_VERSION
    source_hash: str = field(default="", compare=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("source_hash")
        d["equilibria"] = {"seeds": d["equilibria"]} if d["equilibria"] else None
        return _prune(d)

    def device(self, bus):
        return next(d for d in self.devices if d.bus == bus)

    def certificate(self, bus):
        return next((c for c in self.certificates if c.bus == bus), None)


def _prune(obj):
    if isinstance(obj, dict):
        return {k: _prune(v) for k, v in obj.items() if v is not None and v != [] and v != {}}
    if isinstance(obj, list):
        return [_prune(v) for v in obj]
    return obj


# --------------------------------------------------------------------------
# section parsers

def _parse_region(node, path):
    m = _mapping(node, path, ("lower", "upper", "samples"))
    lo = _vector(m["lower"], path + ("lower",))
    hi = _vector(m["upper"], path + ("upper",), len(lo))
    items = _seq(m["samples"], path + ("samples",))
    samples = [_int(n, path + ("samples", i), 1) for i, n in enumerate(items)]
    if len(samples) == 1:
        samples = samples * len(lo)
    if len(samples) != len(lo):
        raise _err(f"expected {len(lo)} sample counts", path + ("samples",), m["samples"])
    for k, (a, b) in enumerate(zip(lo, hi)):
        if not a < b:
            raise _err(f"lower[{k}] must be below upper[{k}]", path + ("upper", k), m["upper"].value[k])
    return RegionSpec(lo, hi, samples)


def _parse_network(node, path):
    m = _mapping(node, path, ("buses",), ("branches", "shunts", "coupling_matrix"))
    nb = _int(m["buses"], path + ("buses",), 1)
    branches, shunts, cm = [], [], None
    for i, bn in enumerate(_seq(m["branches"], path + ("branches",)) if "branches" in m else []):
        p = path + ("branches", i)
        b = _mapping(bn, p, ("from", "to", "r", "x"), ("b",))
        br = {
            "from": _int(b["from"], p + ("from",), 0),
            "to": _int(b["to"], p + ("to",), 0),
            "r": _float(b["r"], p + ("r",), nonneg=True),
            "x": _float(b["x"], p + ("x",)),
            "b": _float(b["b"], p + ("b",)) if "b" in b else 0.0,
        }
        for key in ("from", "to"):
            if br[key] >= nb:
                raise _err(f"bus {br[key]} does not exist (buses: {nb})", p + (key,), b[key])
        if br["from"] == br["to"]:
            raise _err("branch endpoints must differ", p, bn)
        if br["r"] == 0 and br["x"] == 0:
            raise _err("branch impedance must be non-zero", p, bn)
        branches.append(br)
    for i, sn in enumerate(_seq(m["shunts"], path + ("shunts",)) if "shunts" in m else []):
        p = path + ("shunts", i)
        s = _mapping(sn, p, ("bus",), ("g", "b"))
        bus = _int(s["bus"], p + ("bus",), 0)
        if bus >= nb:
            raise _err(f"bus {bus} does not exist", p + ("bus",), s["bus"])
        shunts.append({"bus": bus, "g": _float(s["g"], p + ("g",)) if "g" in s else 0.0,
                       "b": _float(s["b"], p + ("b",)) if "b" in s else 0.0})
    if "coupling_matrix" in m:
        if branches or shunts:
            raise _err("give either branches/shunts or coupling_matrix, not both", path + ("coupling_matrix",),
                       m["coupling_matrix"])
        cm = _matrix(m["coupling_matrix"], path + ("coupling_matrix",))
        if len(cm) != len(cm[0]):
            raise _err("coupling_matrix must be square", path + ("coupling_matrix",), m["coupling_matrix"])
    return NetworkSpec(nb, branches, shunts, cm)


def _parse_device(node, path):
    m = _mapping(node, path, ("bus", "type"), ("port", "params"))
    bus = _int(m["bus"], path + ("bus",), 0)
    typ = _str(m["type"], path + ("type",), DEVICE_TYPES)
    default_port = "current-in" if typ in ("pq_load", "linear_static") else "voltage-in"
    port = _str(m["port"], path + ("port",), ("voltage-in", "current-in")) if "port" in m else default_port
    pp = path + ("params",)
    pn = m.get("params")
    if typ == "sg_flux_decay":
        pm = _mapping(pn, pp, (), SG_KEYS + ("rotation", "field_current", "integral_sign")) if pn else {}
        params = {k: _float(pm[k], pp + (k,)) for k in SG_KEYS if k in pm}
        if "rotation" in pm:
            params["rotation"] = _str(pm["rotation"], pp + ("rotation",), ("delta", "delta-pi/2"))
        if "field_current" in pm:
            params["field_current"] = _str(pm["field_current"], pp + ("field_current",), ("d", "q"))
        if "integral_sign" in pm:
            sgn = _int(pm["integral_sign"], pp + ("integral_sign",))
            if sgn not in (1, -1):
                raise _err("integral_sign must be 1 or -1", pp + ("integral_sign",), pm["integral_sign"])
            params["integral_sign"] = sgn
        try:
            SGParams(**params)
        except DeltaCertError as exc:
            raise _err(str(exc), pp, pn) from None
        if port != "voltage-in":
            raise _err("sg_flux_decay needs port voltage-in", path + ("port",), m["port"])
    elif typ == "pq_load":
        pm = _mapping(pn, pp, ("P", "Q"), ("scale", "i_min"))
        params = {"P": _float(pm["P"], pp + ("P",)), "Q": _float(pm["Q"], pp + ("Q",))}
        if "scale" in pm:
            params["scale"] = _float(pm["scale"], pp + ("scale",), positive=True)
        if "i_min" in pm:
            params["i_min"] = _float(pm["i_min"], pp + ("i_min",), positive=True)
        if port != "current-in":
            raise _err("pq_load needs port current-in", path + ("port",), m["port"])
    elif typ == "linear_lag":
        pm = _mapping(pn, pp, ("tau", "gain"))
        params = {"tau": _float(pm["tau"], pp + ("tau",), positive=True), "gain": _float(pm["gain"], pp + ("gain",))}
    elif typ == "linear":
        pm = _mapping(pn, pp, ("A", "B", "C"), ("D",))
        params = {k: _matrix(pm[k], pp + (k,)) for k in ("A", "B", "C", "D") if k in pm}
        try:
            LinearDevice(**params)
        except DeltaCertError as exc:
            raise _err(str(exc), pp, pn) from None
    else:
        pm = _mapping(pn, pp, (), ("R", "dim")) if pn else {}
        params = {}
        if "R" in pm:
            params["R"] = _matrix(pm["R"], pp + ("R",))
        if "dim" in pm:
            params["dim"] = _int(pm["dim"], pp + ("dim",), 1)
    return DeviceSpec(bus, typ, port, params)


def _parse_cert(node, path):
    m = _mapping(node, path, ("bus", "X"), ("P", "epsilon", "region"))
    spec = CertificateSpec(_int(m["bus"], path + ("bus",), 0), _matrix(m["X"], path + ("X",)))
    if "P" in m:
        spec.P = _matrix(m["P"], path + ("P",))
    if "epsilon" in m:
        spec.epsilon = _float(m["epsilon"], path + ("epsilon",), positive=True)
    if "region" in m:
        spec.region = _parse_region(m["region"], path + ("region",))
    return spec


def _parse_engine(node, path):
    m = _mapping(node, path, (), ("dt", "t_end", "alg_tol", "psd_tol", "eig_tol", "sample_cap", "x0", "u0",
                                  "events"))
    e = EngineSpec()
    for k in ("dt", "t_end", "alg_tol", "psd_tol", "eig_tol"):
        if k in m:
            setattr(e, k, _float(m[k], path + (k,), positive=True))
    if "sample_cap" in m:
        e.sample_cap = _int(m["sample_cap"], path + ("sample_cap",), 1)
    for k in ("x0", "u0"):
        if k in m:
            setattr(e, k, _vector(m[k], path + (k,)))
    if "events" in m:
        for i, ev in enumerate(_seq(m["events"], path + ("events",))):
            t, s = _vector(ev, path + ("events", i), 2)
            if s <= 0:
                raise _err("load scale must be positive", path + ("events", i), ev)
            e.events.append([t, s])
    return e


def _parse_weights(node, path):
    m = _mapping(node, path, (), ("mode", "p", "strategy", "iterations", "grid_points"))
    w = WeightsSpec()
    if "mode" in m:
        w.mode = _str(m["mode"], path + ("mode",), ("fixed", "search"))
    if "p" in m:
        w.p = _vector(m["p"], path + ("p",))
        for i, v in enumerate(w.p):
            if v <= 0:
                raise _err("weights must be positive", path + ("p", i), m["p"].value[i])
    if "strategy" in m:
        w.strategy = _str(m["strategy"], path + ("strategy",), ("auto", "grid", "subgradient"))
    if "iterations" in m:
        w.iterations = _int(m["iterations"], path + ("iterations",), 1)
    if "grid_points" in m:
        w.grid_points = _int(m["grid_points"], path + ("grid_points",), 2)
    if w.mode == "fixed" and w.p is None:
        raise _err("mode fixed needs p", path, node)
    return w


def _range3(node, path):
    lo, hi, step = _vector(node, path, 3)
    if not (0 < lo <= hi and step > 0):
        raise _err("expected [start, stop, step] with 0 < start <= stop and step > 0", path, node)
    return [lo, hi, step]


def _parse_calibration(node, path):
    m = _mapping(node, path, ("target",), ("extra_targets", "r_range", "x_range", "tol", "refine"))
    c = CalibrationSpec(_vector(m["target"], path + ("target",)))
    if "extra_targets" in m:
        c.extra_targets = [_vector(n, path + ("extra_targets", i))
                           for i, n in enumerate(_seq(m["extra_targets"], path + ("extra_targets",)))]
    for k in ("r_range", "x_range"):
        if k in m:
            setattr(c, k, _range3(m[k], path + (k,)))
    if "tol" in m:
        c.tol = _float(m["tol"], path + ("tol",), positive=True)
    if "refine" in m:
        c.refine = _bool(m["refine"], path + ("refine",))
    return c


def _port_dim(dev):
    if dev.type in ("sg_flux_decay", "pq_load"):
        return 2
    if dev.type == "linear_lag":
        return 1
    if dev.type == "linear":
        return len(dev.params["B"][0])
    if "R" in dev.params:
        return len(dev.params["R"])
    return dev.params.get("dim", 1)


def _state_dim(dev):
    return {"sg_flux_decay": 3, "pq_load": 0, "linear_lag": 1, "linear_static": 0}.get(
        dev.type, len(dev.params.get("A", [])))


def parse_config(text, source="<config>"):
    """Parse and validate configuration text.

    Raises
    ------
    ConfigError
        With the key path and line/column of the first problem found.
    """
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError(f"YAML syntax error: {exc.problem}", (), mark.line + 1, mark.column + 1) from None
        raise ConfigError(f"YAML syntax error: {exc}") from None
    if root is None:
        raise ConfigError("configuration is empty")
    m = _mapping(root, (), ("network", "devices", "certificates"),
                 ("version", "name", "weights", "engine", "equilibria", "roa", "sweep", "calibration"))
    version = _int(m["version"], ("version",)) if "version" in m else SCHEMA_VERSION
    if version != SCHEMA_VERSION:
        raise _err(f"unsupported schema version {version}", ("version",), m["version"])
    name = _str(m["name"], ("name",)) if "name" in m else "system"
    network = _parse_network(m["network"], ("network",))

    dev_nodes = _seq(m["devices"], ("devices",))
    devices, seen = [], {}
    for i, dn in enumerate(dev_nodes):
        d = _parse_device(dn, ("devices", i))
        if d.bus >= network.buses:
            raise _err(f"bus {d.bus} does not exist (buses: {network.buses})", ("devices", i, "bus"), dn)
        if d.bus in seen:
            raise _err(f"bus {d.bus} already has a device (devices[{seen[d.bus]}])", ("devices", i, "bus"), dn)
        seen[d.bus] = i
        devices.append(d)
    missing = sorted(set(range(network.buses)) - set(seen))
    if missing:
        raise _err(f"buses without a device: {missing}", ("devices",), m["devices"])
    devices.sort(key=lambda d: d.bus)

    if network.coupling_matrix is None:
        for d in devices:
            if _port_dim(d) != 2:
                raise _err("power networks need two-dimensional ports on every bus",
                           ("devices", seen[d.bus]), dev_nodes[seen[d.bus]])
    else:
        total = sum(_port_dim(d) for d in devices)
        if len(network.coupling_matrix) != total:
            raise _err(f"coupling_matrix must be {total}x{total} (sum of port dims)",
                       ("network", "coupling_matrix"), m["network"])

    certs, cseen = [], set()
    cert_nodes = _seq(m["certificates"], ("certificates",))
    for i, cn in enumerate(cert_nodes):
        c = _parse_cert(cn, ("certificates", i))
        p = ("certificates", i)
        if c.bus not in seen:
            raise _err(f"bus {c.bus} has no device", p + ("bus",), cn)
        if c.bus in cseen:
            raise _err(f"duplicate certificate for bus {c.bus}", p + ("bus",), cn)
        cseen.add(c.bus)
        dev = devices[[d.bus for d in devices].index(c.bus)]
        n, mm = _state_dim(dev), _port_dim(dev)
        if len(c.X) != 2 * mm or len(c.X[0]) != 2 * mm:
            raise _err(f"X must be {2 * mm}x{2 * mm} for this device", p + ("X",), cn)
        if n > 0:
            if c.P is None:
                raise _err("dynamic devices need a storage matrix P", p, cn)
            if len(c.P) != n or len(c.P[0]) != n:
                raise _err(f"P must be {n}x{n} for this device", p + ("P",), cn)
        elif c.P is not None:
            raise _err("static devices take no storage matrix P", p + ("P",), cn)
        if c.region is not None:
            want = n + mm
            if len(c.region.lower) != want:
                raise _err(f"region must span {want} coordinates (states then port inputs)", p + ("region",), cn)
        certs.append(c)
    certs.sort(key=lambda c: c.bus)
    if len(certs) != len(devices):
        raise _err(f"every bus needs a certificate; missing {sorted(set(seen) - cseen)}", ("certificates",),
                   m["certificates"])

    n_tot = sum(_state_dim(d) for d in devices)
    m_tot = sum(_port_dim(d) for d in devices)
    cfg = GridConfig(name, network, devices, certs, version=version)
    if "weights" in m:
        cfg.weights = _parse_weights(m["weights"], ("weights",))
        if cfg.weights.p is not None and len(cfg.weights.p) != len(devices):
            raise _err(f"expected {len(devices)} weights", ("weights", "p"), m["weights"])
    if "engine" in m:
        cfg.engine = _parse_engine(m["engine"], ("engine",))
        if cfg.engine.x0 is not None and len(cfg.engine.x0) != n_tot:
            raise _err(f"x0 must have {n_tot} entries", ("engine", "x0"), m["engine"])
        if cfg.engine.u0 is not None and len(cfg.engine.u0) != m_tot:
            raise _err(f"u0 must have {m_tot} entries", ("engine", "u0"), m["engine"])
    if "equilibria" in m:
        em = _mapping(m["equilibria"], ("equilibria",), ("seeds",))
        for i, sn in enumerate(_seq(em["seeds"], ("equilibria", "seeds"))):
            cfg.equilibria.append(_vector(sn, ("equilibria", "seeds", i), n_tot + m_tot))
    if "roa" in m:
        rm = _mapping(m["roa"], ("roa",), ("region",), ("x0", "margin"))
        region = _parse_region(rm["region"], ("roa", "region"))
        if len(region.lower) != n_tot:
            raise _err(f"roa region must span the {n_tot} states", ("roa", "region"), rm["region"])
        cfg.roa = RoASpec(region)
        if "x0" in rm:
            cfg.roa.x0 = _vector(rm["x0"], ("roa", "x0"), n_tot)
        if "margin" in rm:
            cfg.roa.margin = _float(rm["margin"], ("roa", "margin"), nonneg=True)
    if "sweep" in m:
        sm = _mapping(m["sweep"], ("sweep",), (), ("s_min", "s_max", "s_step"))
        sw = SweepSpec()
        for k in ("s_min", "s_max", "s_step"):
            if k in sm:
                setattr(sw, k, _float(sm[k], ("sweep", k), positive=True))
        if not sw.s_min <= 1.0 <= sw.s_max:
            raise _err("the sweep range must contain s = 1", ("sweep",), m["sweep"])
        cfg.sweep = sw
    if "calibration" in m:
        cfg.calibration = _parse_calibration(m["calibration"], ("calibration",))
        for t in [cfg.calibration.target] + cfg.calibration.extra_targets:
            if len(t) != n_tot + m_tot:
                raise _err(f"targets must have {n_tot + m_tot} entries (x then u)", ("calibration",),
                           m["calibration"])
    cfg.source_hash = hashlib.sha256(text.encode()).hexdigest()
    return cfg


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg):
    """Serialize to YAML text that parses back to an equal configuration."""
    return dump_yaml(cfg.to_dict())


class _Dumper(yaml.SafeDumper):
    pass


def _repr_float(dumper, value):
    return dumper.represent_scalar("tag:yaml.org,2002:float", repr(float(value)))


def _flow_list(dumper, value):
    flow = all(not isinstance(v, (list, dict)) for v in value) or all(
        isinstance(v, list) and all(not isinstance(w, (list, dict)) for w in v) for v in value)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", value, flow_style=flow and len(value) > 0)


_Dumper.add_representer(float, _repr_float)
_Dumper.add_representer(list, _flow_list)
_Dumper.add_representer(tuple, lambda d, v: _flow_list(d, list(v)))
_Dumper.add_representer(np.float64, lambda d, v: _repr_float(d, float(v)))
_Dumper.add_representer(np.int64, lambda d, v: d.represent_int(int(v)))
_Dumper.add_representer(np.bool_, lambda d, v: d.represent_bool(bool(v)))


def dump_yaml(data):
    return yaml.dump(data, Dumper=_Dumper, sort_keys=False, width=120, default_flow_style=False)


# --------------------------------------------------------------------------
# builders

def build_device(spec):
    p = spec.params
    if spec.type == "sg_flux_decay":
        return sg_flux_decay(SGParams(**p), spec.port)
    if spec.type == "pq_load":
        return pq_load(PQLoadParams(**p), spec.port)
    if spec.type == "linear_lag":
        return linear_lag_device(p["tau"], p["gain"], spec.port)
    if spec.type == "linear":
        return LinearDevice(p["A"], p["B"], p["C"], p.get("D"), spec.port)
    return LinearStatic(p.get("R"), p.get("dim"), spec.port)


def build_network(cfg, r=None, x=None):
    """Admittance network; ``r``/``x`` override the first branch (calibration)."""
    brs = []
    for i, b in enumerate(cfg.network.branches):
        rr, xx = b["r"], b["x"]
        if i == 0 and r is not None:
            rr, xx = r, x
        brs.append(Branch(b["from"], b["to"], rr, xx, b.get("b", 0.0)))
    shunts = {s["bus"]: complex(s["g"], s["b"]) for s in cfg.network.shunts}
    return AdmittanceNetwork(cfg.network.buses, tuple(brs), shunts)


def build_coupling(cfg, devices=None, r=None, x=None):
    devices = devices or [build_device(d) for d in cfg.devices]
    if cfg.network.coupling_matrix is not None:
        return coupling_from_matrix(cfg.network.coupling_matrix, [d.port_dim for d in devices])
    return build_C(build_network(cfg, r, x), [PortConvention.parse(d.port) for d in cfg.devices])


def build_assembly(cfg, variant=None, r=None, x=None):
    """System assembly; ``variant`` overrides the generator frame conventions."""
    from .dae import SystemAssembly

    devices = []
    for spec in cfg.devices:
        if variant is not None and spec.type == "sg_flux_decay":
            rot, fc, sgn = variant
            spec = DeviceSpec(spec.bus, spec.type, spec.port,
                              {**spec.params, "rotation": rot, "field_current": fc, "integral_sign": int(sgn)})
        devices.append(build_device(spec))
    return SystemAssembly(devices, build_coupling(cfg, devices, r, x))


def build_certificates(cfg):
    out = []
    for c in cfg.certificates:
        region = c.region.box(cfg.engine.sample_cap) if c.region else None
        out.append(BusCertificate(c.P, c.X, c.epsilon, region))
    return out


def sg_variant(cfg):
    """Frame conventions of the first generator in the config (or None)."""
    for d in cfg.devices:
        if d.type == "sg_flux_decay":
            p = SGParams(**d.params)
            return p.convention
    return None


def bundled_config_path(name="smsl"):
    from importlib.resources import files

    return str(files("deltacert") / "data" / f"{name}.yaml")
