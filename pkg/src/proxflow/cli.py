"""Command line harness: run scenarios, list suites, verify a directory.

Exit codes: 0 all checks pass, 1 any check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .errors import ConfigError
from .harness import format_report, list_suites, run_scenario


def _run_one(args_tuple):
    path, out, seed, tol_scale = args_tuple
    return path, run_scenario(path, out_dir=out, seed=seed, tol_scale=tol_scale)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="proxflow",
        description="certification harness for proximal gradient flows "
                    "on geodesic model spaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="directory for report files")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--tol-scale", type=float, default=1.0)

    p_list = sub.add_parser("list", help="list certification suites")
    p_list.add_argument("--module", default=None,
                        help="filter by module (spaces, functionals, scheme, "
                             "flow, splitting)")

    p_all = sub.add_parser("verify-all", help="run every scenario in a directory")
    p_all.add_argument("directory")
    p_all.add_argument("--out", default=None)
    p_all.add_argument("--seed", type=int, default=None)
    p_all.add_argument("--tol-scale", type=float, default=1.0)
    p_all.add_argument("--workers", type=int, default=1)

    args = parser.parse_args(argv)

    if args.command == "list":
        print(list_suites(args.module))
        return 0

    try:
        if args.command == "run":
            report, code = run_scenario(args.config, out_dir=args.out,
                                        seed=args.seed, tol_scale=args.tol_scale)
            print(format_report(report))
            return code
        # verify-all
        paths = sorted(glob.glob(os.path.join(args.directory, "*.yaml")))
        if not paths:
            print(f"no scenario configs found in {args.directory}", file=sys.stderr)
            return 2
        jobs = [(p, args.out, args.seed, args.tol_scale) for p in paths]
        worst = 0
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(j) for j in jobs]
        for path, (report, code) in results:
            print(format_report(report))
            print()
            worst = max(worst, code)
        return worst
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
