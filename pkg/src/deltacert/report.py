"""Subcommand orchestration and the certification report.

Every ``run_*`` function takes a parsed :class:`~deltacert.config.GridConfig`,
writes its artifacts into ``out_dir`` (when given) and returns a plain dict
that is also dumped as YAML next to them.  Outputs carry no timestamps, so
identical inputs give byte-identical files.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__, kernels
from .calibration import VARIANTS, calibrate, equilibrium_residual, recover_line_and_load
from .config import (
    build_assembly, build_certificates, dump_config, dump_yaml, sg_variant,
)
from .coupling import find_weights
from .dae import (
    continuation_sweep, find_equilibria, find_equilibrium, simulate, write_sweep_csv, write_trajectory_csv,
)
from .devices import StaticBusModel
from .dissipativity import verify_dynamic, verify_static
from .errors import ConfigError, DeltaCertError
from .network import wellposedness_scan
from .roa import (
    AggregateStorage, RegionPredicate, certify_initial_condition, estimate_level, write_point_cloud,
)


def _bus_label(cfg, k):
    return f"D{k + 1}"


def _write(out_dir, name, text):
    if out_dir is None:
        return None
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def provenance(cfg):
    out = {"config_sha256": cfg.source_hash, "tool_version": __version__, "kernel_backend": kernels.BACKEND}
    var = sg_variant(cfg)
    if var is not None:
        br = cfg.network.branches[0] if cfg.network.branches else None
        out["calibration_triple"] = {
            "rotation": var[0], "field_current": var[1], "integral_sign": int(var[2]),
            "r": br["r"] if br else None, "x": br["x"] if br else None,
        }
    return out


def _weights(cfg, asm, certs):
    X_list = [np.asarray(c.X) for c in certs]
    w = cfg.weights
    if w.mode == "fixed":
        return find_weights(X_list, asm.C, asm.coupling.P_pi, "fixed", p=w.p, psd_tol=cfg.engine.psd_tol)
    return find_weights(X_list, asm.C, asm.coupling.P_pi, w.strategy, p=w.p, iterations=w.iterations,
                        grid_points=w.grid_points, psd_tol=cfg.engine.psd_tol)


def _default_u(cfg, asm):
    if cfg.engine.u0 is not None:
        return np.asarray(cfg.engine.u0, float)
    if cfg.equilibria:
        return np.asarray(cfg.equilibria[0][asm.n:], float)
    return np.zeros(asm.m)


def membership_fn(predicate):
    def flags(asm, x, u):
        return predicate.bus_flags(asm, x, u)[0]
    return flags


# --------------------------------------------------------------------------
# certify

@dataclass
class CertificationReport:
    buses: list
    coupling: dict
    wellposedness: dict
    equilibria: list
    verdict: str
    reasons: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "reasons": self.reasons,
            "conditions": {"buses": self.buses, "coupling": self.coupling},
            "assumptions": {
                "wellposedness": self.wellposedness,
                "equilibria_in_region": sum(1 for e in self.equilibria if e.get("in_region")),
            },
            "equilibria": self.equilibria,
            "provenance": self.provenance,
        }

    def dumps(self):
        return dump_yaml(self.to_dict())


def _verify_bus(cfg, asm, cert, k, mode="uniform", threads=1):
    dev = asm.devices[k]
    if cert.region is None:
        raise ConfigError(f"certificate for bus {k} needs a region to be verified", ("certificates", k, "region"))
    if isinstance(dev, StaticBusModel):
        return verify_static(dev, cert.X, cert.region, cfg.engine.psd_tol, bus=k, threads=threads)
    return verify_dynamic(dev, cert.P, cert.X, cert.region, cert.epsilon, mode, cfg.engine.psd_tol, bus=k,
                          threads=threads)


def _region_samples(asm, results, rng, count):
    """Random ``(x, u)`` points of the product region built from passing bus samples."""
    xs = np.zeros((count, asm.n))
    us = np.zeros((count, asm.m))
    for k, res in enumerate(results):
        grid = res.region.grid()
        ok = np.ones(len(grid), bool)
        ok[res.failing] = False
        pool = grid[ok]
        if len(pool) == 0:
            return None
        pts = pool[rng.integers(0, len(pool), count)]
        nx = asm.devices[k].state_dim
        xs[:, asm.x_slices[k]] = pts[:, :nx]
        us[:, asm.u_slices[k]] = pts[:, nx:]
    return xs, us


def run_certify(cfg, out_dir=None, threads=1, seed=0, wellposed_samples=4000):
    """Conditions 1-3, assumption checks and equilibrium membership.

    Each bus region is the part of its box where the pointwise condition
    holds; a bus condition is met when that part is non-empty.  The overall
    verdict is ``certified`` only when every bus condition is met, the
    coupling condition is feasible, ``dg/du`` is non-singular on all sampled
    region points, and at least one equilibrium lies in the region.
    """
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    reasons = []
    buses = []
    results = []
    for k, cert in enumerate(certs):
        res = _verify_bus(cfg, asm, cert, k, threads=threads)
        results.append(res)
        s = res.summary()
        s["label"] = _bus_label(cfg, k)
        s["region_nonempty"] = res.verdict != "fail"
        buses.append(s)
        if res.verdict == "fail":
            reasons.append(f"bus {k}: pointwise condition fails on every sample of its box")
    wc = _weights(cfg, asm, certs)
    if not wc.feasible:
        reasons.append(f"coupling condition infeasible: best lambda_max(K) = {wc.lambda_max_K:.6g}")

    pred = RegionPredicate(certs, cfg.engine.psd_tol)
    rng = np.random.default_rng(seed)
    drawn = _region_samples(asm, results, rng, wellposed_samples)
    wp = wellposedness_scan(asm, np.concatenate(drawn, axis=1)) if drawn is not None else None
    wp_dict = {"samples": wellposed_samples if drawn is not None else 0, "seed": seed}
    if wp is not None:
        wp_dict.update({"min_abs_det": wp.min_abs_det, "failures": int(wp.failures.size), "ok": wp.ok})
        if not wp.ok:
            reasons.append(f"dg/du singular at {wp.failures.size} sampled region points")
    else:
        wp_dict["ok"] = None

    eqs, failures = find_equilibria(asm, [(np.asarray(s[:asm.n]), np.asarray(s[asm.n:])) for s in cfg.equilibria],
                                    eig_tol=cfg.engine.eig_tol)
    eq_out = []
    for e in eqs:
        flags = pred.bus_flags(asm, e.x_star, e.u_star)[0]
        d = e.summary()
        d["membership"] = {_bus_label(cfg, k): bool(f) for k, f in enumerate(flags)}
        d["in_region"] = bool(flags.all())
        eq_out.append(d)
    if not any(e["in_region"] for e in eq_out):
        reasons.append("no equilibrium found inside the dissipative region")
    if failures:
        reasons.extend(f"equilibrium seed failed: {m}" for m in failures)

    core_ok = (all(b["region_nonempty"] for b in buses) and wc.feasible
               and wp_dict["ok"] is not False and any(e["in_region"] for e in eq_out))
    rep = CertificationReport(buses, wc.summary(), wp_dict, eq_out,
                              "certified" if core_ok else "not-certified", reasons, provenance(cfg))
    _write(out_dir, "report.yaml", rep.dumps())
    return rep


def run_verify_device(cfg, bus=None, mode="uniform", out_dir=None, threads=1):
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    ks = range(len(certs)) if bus is None else [bus]
    out = []
    for k in ks:
        if not 0 <= k < len(certs):
            raise ConfigError(f"bus {k} does not exist")
        out.append(_verify_bus(cfg, asm, certs[k], k, mode, threads).summary())
    data = {"devices": out, "provenance": provenance(cfg)}
    _write(out_dir, "verify_device.yaml", dump_yaml(data))
    return data


def run_verify_coupling(cfg, out_dir=None):
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    wc = _weights(cfg, asm, certs)
    X_list = [np.asarray(c.X) for c in certs]
    from .coupling import coupling_matrix

    K = np.asarray(coupling_matrix(wc.weights, X_list, asm.C, asm.coupling.P_pi))
    data = {"coupling": wc.summary(), "eigenvalues_K": [float(v) for v in np.linalg.eigvalsh(K)],
            "C": asm.C.tolist(), "provenance": provenance(cfg)}
    _write(out_dir, "verify_coupling.yaml", dump_yaml(data))
    return data


# --------------------------------------------------------------------------
# simulation-style runs

def trajectory_diagnostics(cfg, asm, traj, radius=1e-3):
    """Predicate adherence and settling against the equilibrium nearest the end state."""
    out = {}
    if cfg.certificates:
        pred = RegionPredicate(build_certificates(cfg), cfg.engine.psd_tol)
        inside = pred(asm, traj.states, traj.algebraics)
        out["predicate_fraction"] = float(inside.mean())
        out["left_predicate_at"] = None if inside.all() else float(traj.times[np.argmin(inside)])
    try:
        eq = find_equilibrium(asm.with_load_scale(traj.scales[-1]), traj.states[-1], traj.algebraics[-1])
    except DeltaCertError as exc:
        out["settling"] = {"error": str(exc)}
        return out
    dist = np.linalg.norm(traj.states - eq.x_star, axis=1)
    far = np.flatnonzero(dist >= radius)
    settled = far.size == 0 or far[-1] + 1 < len(dist)
    out["settling"] = {
        "x_star": [float(v) for v in eq.x_star],
        "radius": radius,
        "final_distance": float(dist[-1]),
        "settled_at": (float(traj.times[0] if far.size == 0 else traj.times[far[-1] + 1]) if settled else None),
    }
    return out


def run_simulate(cfg, out_dir=None, x0=None, t_end=None, dt=None, events=None):
    asm = build_assembly(cfg)
    x0 = np.asarray(x0 if x0 is not None else (cfg.engine.x0 or (cfg.roa.x0 if cfg.roa else None)), float)
    if x0.ndim == 0:
        raise ConfigError("no initial state: set engine.x0", ("engine", "x0"))
    traj = simulate(asm, x0, t_end or cfg.engine.t_end, dt or cfg.engine.dt, _default_u(cfg, asm),
                    events=cfg.engine.events if events is None else events)
    data = {
        "steps": int(len(traj.times) - 1),
        "t_final": float(traj.times[-1]),
        "x_final": [float(v) for v in traj.states[-1]],
        "u_final": [float(v) for v in traj.algebraics[-1]],
        "max_g_residual": float(np.max(traj.residuals)),
        "error": traj.error,
    }
    data.update(trajectory_diagnostics(cfg, asm, traj))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_trajectory_csv(os.path.join(out_dir, "trajectory.csv"), traj)
        _write(out_dir, "simulate.yaml", dump_yaml(data))
    return data, traj


def run_equilibria(cfg, out_dir=None):
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    pred = RegionPredicate(certs, cfg.engine.psd_tol)
    seeds = [(np.asarray(s[:asm.n]), np.asarray(s[asm.n:])) for s in cfg.equilibria]
    if not seeds:
        raise ConfigError("no equilibrium seeds configured", ("equilibria", "seeds"))
    eqs, failures = find_equilibria(asm, seeds, eig_tol=cfg.engine.eig_tol)
    out = []
    for e in eqs:
        d = e.summary()
        d["membership"] = {_bus_label(cfg, k): bool(f) for k, f in enumerate(pred.bus_flags(asm, e.x_star, e.u_star)[0])}
        out.append(d)
    data = {"equilibria": out, "failed_seeds": failures}
    _write(out_dir, "equilibria.yaml", dump_yaml(data))
    return data, eqs


def run_sweep(cfg, out_dir=None, s_min=None, s_max=None, s_step=None):
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    pred = RegionPredicate(certs, cfg.engine.psd_tol)
    sw = cfg.sweep
    s_min = s_min or (sw.s_min if sw else 0.7)
    s_max = s_max or (sw.s_max if sw else 1.6)
    s_step = s_step or (sw.s_step if sw else 0.005)
    if not cfg.equilibria:
        raise ConfigError("the sweep needs an equilibrium seed", ("equilibria", "seeds"))
    seed = np.asarray(cfg.equilibria[0], float)
    k = int(round((s_max - s_min) / s_step))
    s_values = s_min + s_step * np.arange(k + 1)
    res = continuation_sweep(asm, s_values, seed[:asm.n], seed[asm.n:], membership_fn(pred), cfg.engine.eig_tol)
    labels = [_bus_label(cfg, k) for k in range(len(certs))]
    windows = {}
    for b, lab in enumerate(labels):
        windows[lab] = res.window(lambda r, b=b: bool(r.flags[b]))
    windows["certified"] = res.window(lambda r: all(r.flags) and r.equilibrium.classification != "unstable")
    windows["eigen_stable"] = res.window(lambda r: r.equilibrium.classification == "stable")
    data = {
        "windows": {k: (None if v is None else [float(v[0]), float(v[1])]) for k, v in windows.items()},
        "rows": len(res.rows),
        "truncated_low": res.truncated_low,
        "truncated_high": res.truncated_high,
        "messages": res.messages,
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_sweep_csv(os.path.join(out_dir, "sweep.csv"), res, labels)
        _write(out_dir, "sweep.yaml", dump_yaml(data))
    return data, res


def run_roa(cfg, out_dir=None, weights=None):
    """Critical level on the configured state grid and the verdict for ``roa.x0``."""
    if cfg.roa is None:
        raise ConfigError("no roa section in the configuration", ("roa",))
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    if weights is None:
        wc = _weights(cfg, asm, certs)
        weights = wc.weights
    pred = RegionPredicate(certs, cfg.engine.psd_tol)
    storage = AggregateStorage(weights, certs)
    seeds = [(np.asarray(s[:asm.n]), np.asarray(s[asm.n:])) for s in cfg.equilibria]
    eqs, _ = find_equilibria(asm, seeds, eig_tol=cfg.engine.eig_tol)
    inside = [e for e in eqs if pred(asm, e.x_star, e.u_star)[0]]
    u_seed = inside[0].u_star if inside else _default_u(cfg, asm)
    grid = cfg.roa.region.box(cfg.engine.sample_cap)
    level, scan = estimate_level(asm, pred, storage, grid, u_seed)
    data = {"level": level.summary(), "weights": [float(v) for v in weights]}
    if cfg.roa.x0 is not None:
        v = certify_initial_condition(asm, pred, storage, level, cfg.roa.x0, u_seed, cfg.roa.margin)
        data["initial_condition"] = {"x0": list(cfg.roa.x0), **v.summary()}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_point_cloud(os.path.join(out_dir, "roa_points.csv"), scan)
        _write(out_dir, "roa.yaml", dump_yaml(data))
    return data, level, scan


# --------------------------------------------------------------------------
# calibration

def _lattice(rng3):
    lo, hi, step = rng3
    k = int(np.floor((hi - lo) / step + 1e-9))
    return lo + step * np.arange(k + 1)


def calibrated_config(cfg, variant, r, x):
    """Copy of ``cfg`` with the generator conventions and first branch replaced."""
    import copy

    new = copy.deepcopy(cfg)
    for d in new.devices:
        if d.type == "sg_flux_decay":
            d.params.update({"rotation": variant[0], "field_current": variant[1], "integral_sign": int(variant[2])})
    if new.network.branches:
        new.network.branches[0]["r"] = float(r)
        new.network.branches[0]["x"] = float(x)
    return new


def run_calibrate(cfg, out_dir=None, variants=VARIANTS):
    """Search the frame convention and line data against ``calibration.target``.

    Writes ``calibration.yaml`` and ``calibrated.yaml`` (the input config with
    the best triple substituted).  When the best residual exceeds the
    tolerance the result says ``reproduced: false``.
    """
    cal = cfg.calibration
    if cal is None:
        raise ConfigError("no calibration section in the configuration", ("calibration",))
    if not cfg.network.branches:
        raise ConfigError("calibration needs a branch-list network", ("network", "branches"))
    if sg_variant(cfg) is None:
        raise ConfigError("calibration needs an sg_flux_decay device", ("devices",))

    def factory(var, r, x):
        return build_assembly(cfg, var, r, x)

    res = calibrate(factory, cal.target, _lattice(cal.r_range), _lattice(cal.x_range), variants, cal.refine,
                    cal.tol)
    data = res.summary()
    asm = build_assembly(cfg)
    targets = [np.asarray(cal.target, float)] + [np.asarray(t, float) for t in cal.extra_targets]
    if len(targets) >= 2 and asm.m == 4:
        try:
            Z, S, resid = recover_line_and_load([t[asm.n:] for t in targets])
            data["closed_form"] = {"r": Z.real, "x": Z.imag, "P_load": S.real, "Q_load": S.imag,
                                   "residual": resid}
        except Exception as exc:  # diagnostic only
            data["closed_form"] = {"error": str(exc)}
    extra = []
    for t in targets[1:]:
        r, _ = equilibrium_residual(factory, res.best.variant, res.best.r, res.best.x, t)
        extra.append(float(r))
    data["extra_target_residuals"] = extra
    if not res.reproduced:
        data["note"] = (f"no (convention, r, x) triple reproduces the target within {cal.tol:g}; "
                        "numeric reproductions depending on it are not claimed")
    new_cfg = calibrated_config(cfg, res.best.variant, res.best.r, res.best.x)
    _write(out_dir, "calibration.yaml", dump_yaml(data))
    _write(out_dir, "calibrated.yaml", dump_config(new_cfg))
    return data, res, new_cfg
