#!/usr/bin/env python3
"""Accepted step sizes of the adaptive transformed scheme for several tolerances."""
import argparse
import os

from kinmoment import harness


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--basis", default="m10")
    ap.add_argument("--problem", default="planesource")
    ap.add_argument("--nx", type=int, default=240)
    ap.add_argument("--tols", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4, 1e-5])
    ap.add_argument("--out", default="results/timesteps")
    args = ap.parse_args()
    for tol in args.tols:
        out = os.path.join(args.out, f"{args.basis}_tol{tol:g}")
        cfg = harness.make_config(overrides=dict(basis=args.basis, problem=args.problem, nx=args.nx, tol=tol,
                                                 out_dir=out))
        rec = harness.run(cfg)
        disc, _ = harness.build(cfg)
        print(f"tol={tol:g}: {rec.n_steps} steps, max dt {max(rec.dt):.4g} (cfl {disc.cfl_dt():.4g}), "
              f"{rec.wall_total:.1f} s -> {out}")


if __name__ == "__main__":
    main()
