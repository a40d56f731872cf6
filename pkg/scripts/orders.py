#!/usr/bin/env python3
"""Temporal convergence orders of both schemes on source-beam."""
import argparse

from kinmoment.acceptance import criterion_10


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bases", nargs="+", default=["hfm10"])
    args = ap.parse_args()
    for name in args.bases:
        r = criterion_10(basis_name=name)
        print(name, r.line(), flush=True)


if __name__ == "__main__":
    main()
