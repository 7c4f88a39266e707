"""Compare the compiled and numpy kernel backends on batched certificate checks.

Usage::

    python benchmarks/bench_kernels.py [--samples N] [--repeat R]

Both backends evaluate the same generator Jacobian stacks; the script
prints the best-of-R wall time per kernel and the largest disagreement.
"""

import argparse
import timeit

import numpy as np

from deltacert.config import build_assembly, build_certificates, bundled_config_path, load_config
from deltacert.kernels import backend_module


def _inputs(samples, seed):
    cfg = load_config(bundled_config_path())
    asm = build_assembly(cfg)
    certs = build_certificates(cfg)
    rng = np.random.default_rng(seed)
    x = rng.uniform([-0.5, -0.5, 0.3], [0.8, 0.5, 1.5], (samples, 3))
    v = rng.uniform([0.2, -0.6], [1.3, 0.4], (samples, 2))
    i = rng.uniform([0.01, -1.5], [1.2, 0.5], (samples, 2))
    jx, ju, hx, hu = (np.ascontiguousarray(a) for a in asm.devices[0].jacobians(x, v))
    hu_load = np.ascontiguousarray(asm.devices[1].jacobian(i))
    P, X1, X2 = (np.ascontiguousarray(np.asarray(m, float)) for m in (certs[0].P, certs[0].X, certs[1].X))
    a = rng.standard_normal((samples, 5, 5))
    sym = np.ascontiguousarray(a + np.swapaxes(a, 1, 2))
    return {
        "extreme_eigs": (sym,),
        "krasovskii_lmax": (jx, ju, hx, hu, P, X1, 1e-4),
        "static_lmin": (hu_load, X2),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = {"numpy": backend_module("numpy")}
    try:
        backends["cython"] = backend_module("cython")
    except ImportError:
        print("compiled kernels not built; timing numpy only")
    inputs = _inputs(args.samples, args.seed)
    print(f"{'kernel':<18}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max diff':>12}")
    for name, call_args in inputs.items():
        times, outs = {}, {}
        for b, mod in backends.items():
            fn = getattr(mod, name)
            outs[b] = np.asarray(fn(*call_args))
            times[b] = min(timeit.repeat(lambda: fn(*call_args), number=1, repeat=args.repeat))
        row = f"{name:<18}" + "".join(f"{times[b] * 1e3:>10.1f}ms" for b in backends)
        if "cython" in backends:
            diff = np.max(np.abs(outs["cython"] - outs["numpy"]) / (1 + np.abs(outs["numpy"])))
            row += f"{times['numpy'] / times['cython']:>9.1f}x{diff:>12.1e}"
        print(row)


if __name__ == "__main__":
    main()
