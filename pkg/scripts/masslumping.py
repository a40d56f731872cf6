#!/usr/bin/env python3
"""Masslumped vs full-quadrature hat function runs: error and wall time per interval count."""
import argparse

import numpy as np

from kinmoment.acceptance import _l1
from kinmoment.basis import hat_functions
from kinmoment.discretization import Discretization
from kinmoment.problems import plane_source
from kinmoment.scheme_transformed import TransformedConfig, TransformedScheme


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--intervals", type=int, nargs="+", default=[10, 20, 40, 80, 160])
    ap.add_argument("--nx", type=int, default=240)
    ap.add_argument("--tf", type=float, default=0.5)
    ap.add_argument("--tol", type=float, default=1e-3)
    args = ap.parse_args()
    print("k\tl1\twall_full\twall_lumped\tpairwise_order")
    prev = None
    for k in args.intervals:
        recs = []
        for lumped in (False, True):
            disc = Discretization(hat_functions(k + 1, lumped), plane_source(args.tf), args.nx)
            recs.append(TransformedScheme(disc, TransformedConfig(tau_step=args.tol)).run(args.tf))
        e = _l1(recs[0].u, recs[1].u, disc.dx)
        order = "" if prev is None else f"{np.log(prev[1] / e) / np.log(k / prev[0]):.2f}"
        print(f"{k}\t{e:.3e}\t{recs[0].wall_total:.1f}\t{recs[1].wall_total:.1f}\t{order}", flush=True)
        prev = (k, e)


if __name__ == "__main__":
    main()
