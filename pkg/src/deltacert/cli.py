"""Command-line interface.

Exit codes: 0 the command ran (verdicts live in its output), 1 usage or
configuration error (including unreadable/unwritable files), 2 internal
numeric failure.
"""

import argparse
import sys
import traceback

import numpy as np

from . import __version__
from .config import bundled_config_path, dump_yaml, load_config
from .errors import ConfigError, DeltaCertError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _events(text):
    out = []
    for item in text.split(","):
        try:
            t, s = item.split(":")
            out.append((float(t), float(s)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected TIME:SCALE pairs, got {item!r}") from None
        if out[-1][1] <= 0:
            raise argparse.ArgumentTypeError(f"load scale must be positive in {item!r}")
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="configuration file (default: bundled SMSL example)")
    common.add_argument("--out", metavar="DIR", help="directory for CSV/YAML artifacts")
    common.add_argument("--threads", metavar="K", type=int, default=1, help="worker threads for region sampling")
    common.add_argument("--seed", metavar="INT", type=int, default=0, help="seed for randomized checks")

    p = _Parser(prog="deltacert", description="Compositional delta-dissipativity stability certificates.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("certify", parents=[common], help="check all conditions and write the certification report")
    vd = sub.add_parser("verify-device", parents=[common], help="check device dissipativity on its region")
    vd.add_argument("--bus", type=int, help="bus index (default: all)")
    vd.add_argument("--mode", choices=("uniform", "exact"), default="uniform")
    sub.add_parser("verify-coupling", parents=[common], help="search weights for the coupling condition")
    sm = sub.add_parser("simulate", parents=[common], help="simulate the DAE and write trajectory.csv")
    sm.add_argument("--x0", type=_floats, help="initial state, comma-separated")
    sm.add_argument("--t-end", type=float)
    sm.add_argument("--dt", type=float)
    ev = sm.add_mutually_exclusive_group()
    ev.add_argument("--events", type=_events, metavar="T:S,...", help="load-scale steps, e.g. 5:1.05,50:0.95")
    ev.add_argument("--no-events", action="store_true", help="ignore configured load-scale events")
    sub.add_parser("roa", parents=[common], help="estimate the critical level and write roa_points.csv")
    sw = sub.add_parser("sweep", parents=[common], help="load-scale continuation, writes sweep.csv")
    sw.add_argument("--s-min", type=float)
    sw.add_argument("--s-max", type=float)
    sw.add_argument("--s-step", type=float)
    sub.add_parser("equilibria", parents=[common], help="find and classify equilibria from configured seeds")
    sub.add_parser("calibrate", parents=[common], help="recover frame convention and line data")
    return p


def _dispatch(args, cfg):
    from . import report

    if args.command == "certify":
        return report.run_certify(cfg, args.out, args.threads, args.seed).to_dict()
    if args.command == "verify-device":
        return report.run_verify_device(cfg, args.bus, args.mode, args.out, args.threads)
    if args.command == "verify-coupling":
        return report.run_verify_coupling(cfg, args.out)
    if args.command == "simulate":
        events = [] if args.no_events else args.events
        return report.run_simulate(cfg, args.out, args.x0, args.t_end, args.dt, events)[0]
    if args.command == "roa":
        return report.run_roa(cfg, args.out)[0]
    if args.command == "sweep":
        return report.run_sweep(cfg, args.out, args.s_min, args.s_max, args.s_step)[0]
    if args.command == "equilibria":
        return report.run_equilibria(cfg, args.out)[0]
    if args.command == "calibrate":
        return report.run_calibrate(cfg, args.out)[0]
    raise AssertionError(args.command)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    path = args.config or bundled_config_path()
    try:
        cfg = load_config(path)
        np.random.seed(args.seed)
        data = _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DeltaCertError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception:  # noqa: BLE001 - any other crash is an internal failure
        traceback.print_exc()
        return EXIT_NUMERIC
    sys.stdout.write(dump_yaml(data))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
