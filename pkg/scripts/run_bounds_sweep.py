#!/usr/bin/env python3
"""Random sweep of the attention-divergence bound with worst-margin reporting.

Each instance draws two queries and a key matrix, evaluates every inequality
in the chain, and records how close the tightest one came to its ceiling.
A failure count other than zero means the bound itself was violated.
"""

import argparse
from collections import defaultdict

from kvevict import sweep_bounds


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=10_000,
                    help="instances per (head dim, key count) cell")
    ap.add_argument("--d-ks", default="2,8,64")
    ap.add_argument("--key-counts", default="4,64")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=None)
    return ap.parse_args()


def main():
    args = parse_args()
    d_ks = tuple(int(v) for v in args.d_ks.split(","))
    key_counts = tuple(int(v) for v in args.key_counts.split(","))
    rows = sweep_bounds(args.trials, d_ks=d_ks, key_counts=key_counts,
                        seed=args.seed, max_workers=args.workers)

    failures = 0
    margins = defaultdict(lambda: float("inf"))
    chords = defaultdict(float)
    for d, n, _, r in rows:
        failures += not r.holds
        # slack of the L1 inequality, the one the others are chained from
        margins[(d, n)] = min(margins[(d, n)], r.rhs1 - r.lhs1)
        chords[(d, n)] = max(chords[(d, n)], r.rhs1)

    print(f"instances: {len(rows)}   failures: {failures}")
    print(f"{'d_k':>5} {'keys':>5} {'min margin':>14} {'max chord':>12}")
    for key in sorted(margins):
        d, n = key
        print(f"{d:>5} {n:>5} {margins[key]:14.3e} {chords[key]:12.4f}")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
