"""Replay default runs against every cache policy and tabulate the reports.

    python scripts/cache_policies.py --seeds 20 --out results/cache.csv
"""
import argparse
import csv
import sys
from dataclasses import asdict
from pathlib import Path

from nasevo.cache_sim import CachePolicy, replay
from nasevo.engine import SearchConfig, run_search
from nasevo.space import SpaceSpec

POLICIES = ["store-all", "skip-bottom", "prob:0.01", "prob:0.1", "tier:2:100", "tier:5:100"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--policy", action="append", help="policy spec (repeatable); default: a standard set")
    ap.add_argument("--capacity", type=int)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    policies = [CachePolicy.parse(p, args.capacity) for p in (args.policy or POLICIES)]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = None
    for seed in range(args.seeds):
        events = run_search(SearchConfig(rng_seed=seed), SpaceSpec()).events
        for pol in policies:
            r = replay(events, pol)
            row = {"seed": seed, **asdict(r), "hit_rate": f"{r.hit_rate:.4f}"}
            if w is None:
                w = csv.DictWriter(out, fieldnames=list(row), lineterminator="\n")
                w.writeheader()
            w.writerow(row)
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
