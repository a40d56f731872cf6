#!/usr/bin/env python3
"""Entropy defect of relaxed and unrelaxed transformed runs."""
import argparse

from kinmoment.basis import parse_basis
from kinmoment.discretization import Discretization
from kinmoment.problems import get_problem
from kinmoment.scheme_transformed import TransformedConfig, TransformedScheme, entropy_defect


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bases", nargs="+", default=["hfm10", "m10", "pmm10"])
    ap.add_argument("--problem", default="planesource")
    ap.add_argument("--nx", type=int, default=240)
    ap.add_argument("--tf", type=float, default=0.5)
    ap.add_argument("--tol", type=float, default=1e-3)
    args = ap.parse_args()
    print("basis\tunrelaxed\trelaxed")
    for name in args.bases:
        disc = Discretization(parse_basis(name), get_problem(args.problem, args.tf), args.nx)
        d = [entropy_defect(TransformedScheme(disc, TransformedConfig(tau_step=args.tol, relaxed=r)).run(args.tf))
             for r in (False, True)]
        print(f"{name}\t{d[0]:.3e}\t{d[1]:.3e}", flush=True)


if __name__ == "__main__":
    main()
