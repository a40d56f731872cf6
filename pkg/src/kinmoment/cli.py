"""Command line interface: ``solve``, ``compare`` and ``selftest``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import acceptance, harness


def _add_solve_args(p: argparse.ArgumentParser):
    # defaults are None so that only flags given on the command line override a --config file
    p.add_argument("--config", help="key=value file; command line flags take precedence")
    p.add_argument("--scheme", choices=("standard", "transformed"))
    p.add_argument("--basis", help="m<N> full moments, hfm<N> hat functions, pmm<N> partial moments")
    p.add_argument("--problem", help="planesource or sourcebeam")
    p.add_argument("--nx", type=int)
    p.add_argument("--tf", type=float)
    p.add_argument("--dt", type=float, help="constant step of the standard scheme")
    p.add_argument("--dt-cfl", action="store_const", const=True, help="standard scheme at the realizability limit")
    p.add_argument("--tol", type=float, help="tolerance of the adaptive transformed scheme")
    p.add_argument("--relaxed", action="store_const", const=True)
    p.add_argument("--hessian-reg", type=float)
    p.add_argument("--hf-clip", action="store_const", const=True)
    p.add_argument("--masslumping", action="store_const", const=True)
    p.add_argument("--fixed-dt", type=float, help="constant step for the transformed scheme")
    p.add_argument("--warmup", type=float, help="start a --fixed-dt run from the adaptive solution at this time")
    p.add_argument("--warmup-tol", type=float)
    p.add_argument("--tau", type=float, help="dual solver gradient tolerance")
    p.add_argument("--max-newton-iter", type=int)
    p.add_argument("--rho-vac", type=float)
    p.add_argument("--no-cache", action="store_const", const=True)
    p.add_argument("--out-dir")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)


def _config_from_args(args) -> harness.RunConfig:
    file_values = harness.read_config_file(args.config) if args.config else {}
    keys = [f.name for f in dataclasses.fields(harness.RunConfig)]
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    return harness.make_config(file_values, overrides)


def cmd_solve(args) -> int:
    try:
        config = _config_from_args(args)
    except (harness.ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    rec = harness.run(config)
    print(f"{config.scheme} {config.basis} {config.problem} nx={config.nx}: "
          f"{rec.n_steps} steps, {rec.wall_total:.2f} s")
    if config.out_dir:
        print(f"wrote {config.out_dir}")
    return 0


def cmd_compare(args) -> int:
    try:
        l1, linf = harness.compare(args.a, args.b)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"L1 = {l1:.17g}")
    print(f"Linf = {linf:.17g}")
    return 0


def cmd_selftest(args) -> int:
    numbers = args.only or (acceptance.FAST + (acceptance.SLOW if args.slow else ()))
    failed = 0
    for i in numbers:
        fn = acceptance.CRITERIA[i]
        r = fn(seed=args.seed) if i in (1, 2, 3) else fn()
        print(r.line(), flush=True)
        failed += not r.passed
    print(f"{len(numbers) - failed} of {len(numbers)} criteria passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinmoment", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("solve", help="run one simulation")
    _add_solve_args(p)
    p.set_defaults(func=cmd_solve)
    p = sub.add_parser("compare", help="L1 and Linf difference of two solution.csv files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("selftest", help="run the acceptance checks")
    p.add_argument("--slow", action="store_true", help="include the full-scale error table check")
    p.add_argument("--only", type=int, nargs="+", choices=sorted(acceptance.CRITERIA), metavar="N")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
