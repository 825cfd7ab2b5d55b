"""Measured idle wait against the closed-form bound for a range of s_wait values.

    python scripts/quanta_sweep.py --runs 50 --out results/quanta.csv
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from nasevo.engine import DurationModel, SearchConfig, run_search
from nasevo.prob import quanta_delay_bound
from nasevo.space import SpaceSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--runs", type=int, default=50)
    ap.add_argument("--workers", type=int, default=25)
    ap.add_argument("--mu", type=float, default=60.0)
    ap.add_argument("--sigma", type=float, default=10.0)
    ap.add_argument("--s-wait", type=int, nargs="+", default=[1, 2, 5, 10, 15, 20, 25])
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["s_wait", "mean_wait", "std_over_runs", "bound", "ratio"])
    spec = SpaceSpec()
    for s_wait in args.s_wait:
        waits = []
        for seed in range(args.runs):
            cfg = SearchConfig(rng_seed=seed, num_workers=args.workers, scheduling="quanta", s_wait=s_wait,
                               duration=DurationModel("normal", args.mu, args.sigma), transfer_enabled=False)
            waits.append(run_search(cfg, spec).delay.mean_wait)
        bound = quanta_delay_bound(s_wait, args.workers, args.mu, args.sigma)
        mean = float(np.mean(waits))
        w.writerow([s_wait, f"{mean:.4f}", f"{np.std(waits):.4f}", f"{bound:.4f}",
                    f"{mean / bound:.3f}" if bound else ""])
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
