#!/usr/bin/env python3
"""Recall-vs-budget study: every eviction policy against the decode-time oracle.

Generates a synthetic trace (or loads one with --trace), scores each policy at
a grid of budget fractions, and prints a policy x budget recall table. Values
are deterministic for a fixed trace and seed.
"""

import argparse

import numpy as np

from kvevict import (
    CacheBudget,
    PolicyConfig,
    PolicyKind,
    PseudoQuerySpec,
    compute_recall,
    generate_synthetic_trace,
    gold_per_kv_head,
    read_trace_file,
    select,
)
from kvevict.cli import BudgetSpec

POLICIES = [PolicyKind.DAPQ, PolicyKind.SNAPKV, PolicyKind.H2O, PolicyKind.STREAMING_LLM]


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trace", help="existing .kvqt trace; omit to synthesize one")
    ap.add_argument("--budgets", default="1%,2%,5%,10%,25%")
    ap.add_argument("--prompt-len", type=int, default=2048)
    ap.add_argument("--decode-len", type=int, default=64)
    ap.add_argument("--layers", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pseudo-len", type=int, default=32)
    ap.add_argument("--window", type=int, default=32)
    return ap.parse_args()


def mean_recall(trace, kind, tokens, spec, window):
    cfg = PolicyConfig(kind=kind, window=min(window, tokens))
    vals = []
    for li in range(trace.header.num_layers):
        layer = trace.layer(li)
        golds = gold_per_kv_head(layer, tokens)
        kept = select(layer, CacheBudget(tokens), cfg, spec).retained
        vals.extend(compute_recall(g, k) for g, k in zip(golds, kept))
    return float(np.mean(vals))


def main():
    args = parse_args()
    if args.trace:
        trace = read_trace_file(args.trace)
    else:
        trace = generate_synthetic_trace(
            num_layers=args.layers, num_q_heads=4, num_kv_heads=2, head_dim=32,
            prompt_len=args.prompt_len, decode_len=args.decode_len, seed=args.seed,
        )
    h = trace.header
    print(f"trace: layers={h.num_layers} q_heads={h.num_q_heads} "
          f"kv_heads={h.num_kv_heads} d={h.head_dim} prompt={h.prompt_len} "
          f"decode={h.decode_len}")

    budgets = [BudgetSpec(b) for b in args.budgets.split(",")]
    spec = PseudoQuerySpec(length=min(args.pseudo_len, h.prompt_len))

    names = [k.value for k in POLICIES]
    print(f"{'budget':>8} {'tokens':>7} " + " ".join(f"{n:>14}" for n in names))
    for b in budgets:
        tokens = b.resolve(h.prompt_len)
        row = [
            f"{mean_recall(trace, kind, tokens, spec, args.window):14.4f}"
            for kind in POLICIES
        ]
        print(f"{b.raw:>8} {tokens:>7} " + " ".join(row))


if __name__ == "__main__":
    main()
