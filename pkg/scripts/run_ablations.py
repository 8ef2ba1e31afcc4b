#!/usr/bin/env python3
"""Reproduce the two ablation sweeps on the mixture benchmark: the
forward-consistency weight grid (0 .. inf) and the step-count grid.

Writes one CSV per axis under --out-dir.  These are long runs; trim
--iters for a quick pass.
"""

import argparse
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from siddm_lab.training import RunConfig, ablation_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=10_000)
    ap.add_argument("--steps", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="runs/ablations")
    ap.add_argument("--axis", choices=["lambda_afd", "steps", "both"], default="both")
    args = ap.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)

    base = RunConfig(objective="siddm", T=args.steps, iters=args.iters, seed=args.seed)
    if args.axis in ("lambda_afd", "both"):
        rows = ablation_sweep(base, "lambda_afd", [0.0, 0.1, 0.5, 1.0, 5.0, math.inf],
                              out_csv=os.path.join(args.out_dir, "lambda_afd.csv"))
        for r in rows:
            print(f"lambda={r['value']}: frechet={r['frechet']:.5f} modes={r['modes_covered']}")
    if args.axis in ("steps", "both"):
        rows = ablation_sweep(base, "steps", [1, 2, 4, 8, 16],
                              out_csv=os.path.join(args.out_dir, "steps.csv"))
        for r in rows:
            print(f"T={r['value']}: frechet={r['frechet']:.5f} modes={r['modes_covered']}")


if __name__ == "__main__":
    main()
