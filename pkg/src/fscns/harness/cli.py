"""Command line interface.

Exit codes: 0 success, 2 configuration error, 3 health abort,
4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import ConfigError, ContractError
from .config import load_config, load_plan
from .io import read_snapshot
from .mms_verify import mms_verify
from .runner import EXIT_CONFIG, EXIT_OK, run
from .sweep import sweep

__all__ = ["main", "build_parser"]

log = logging.getLogger("fscns")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", default="out", help="directory for artifacts")
    common.add_argument("--seed", type=int, default=None, help="override run.seed")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = argparse.ArgumentParser(prog="fscns", description="free-surface compressible flow runs")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="single run from a config file")
    r.add_argument("config")
    s = sub.add_parser("sweep", parents=[common], help="parameter sweep from a plan file")
    s.add_argument("plan")
    m = sub.add_parser("mms", parents=[common], help="manufactured-solution refinement study")
    m.add_argument("config")
    m.add_argument("--solution", default="moving_surface")
    m.add_argument("--resolutions", default="12,24,48",
                   help="comma separated vertical resolutions")
    m.add_argument("--min-order", type=float, default=1.5,
                   help="observed order required for exit code 0")
    i = sub.add_parser("inspect", help="summarize a snapshot file")
    i.add_argument("snapshot")
    i.add_argument("--quiet", action="store_true")
    return p


def _configure_logging(quiet):
    logging.basicConfig(level=logging.ERROR if quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr, force=True)


def _seeded(cfg, seed):
    return cfg if seed is None else cfg.with_seed(seed)


def _print(obj, quiet):
    if not quiet:
        print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args.quiet)
    try:
        if args.command == "run":
            cfg = _seeded(load_config(args.config), args.seed)
            res = run(cfg, args.output_dir, quiet=args.quiet)
            _print(res.report, args.quiet)
            return res.exit_code
        if args.command == "sweep":
            plan = load_plan(args.plan)
            plan.base = _seeded(plan.base, args.seed)
            rep = sweep(plan, args.output_dir, quiet=args.quiet)
            _print(rep.as_dict(), args.quiet)
            return rep.exit_code
        if args.command == "mms":
            cfg = _seeded(load_config(args.config), args.seed)
            try:
                resolutions = [int(x) for x in args.resolutions.split(",") if x.strip()]
            except ValueError:
                raise ConfigError([f"resolutions: not a list of integers: {args.resolutions!r}"])
            rep = mms_verify(cfg, args.solution, resolutions, args.output_dir,
                             min_order=args.min_order, quiet=args.quiet)
            _print(rep.as_dict(), args.quiet)
            return rep.exit_code
        if args.command == "inspect":
            st = read_snapshot(args.snapshot)
            info = {"t": st.t, "A": st.A, "grid": st.grid.describe(),
                    "rho": [float(st.rho.min()), float(st.rho.max())],
                    "v_max": float(abs(st.v).max()), "h": [float(st.h.min()), float(st.h.max())]}
            _print(info, args.quiet)
            return EXIT_OK
    except ConfigError as err:
        for prob in err.problems:
            print(f"config error: {prob}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContractError, FileNotFoundError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
