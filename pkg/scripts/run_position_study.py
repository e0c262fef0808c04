#!/usr/bin/env python3
"""Position study: why the pseudo window must sit at the prompt's end.

Three views over one synthetic trace:
  1. query-similarity conditions (content vs position, pre and post rotation),
  2. similarity decay as the window anchor moves away from the true start,
  3. window-size alignment between truncated windows and the decode oracle.
"""

import argparse

from kvevict import (
    QueryCondition,
    generate_synthetic_trace,
    offset_decay_curve,
    read_trace_file,
    similarity_experiment,
    window_attention_alignment,
)
from kvevict.cli import default_offset_grid


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trace", help="existing .kvqt trace; omit to synthesize one")
    ap.add_argument("--prompt-len", type=int, default=2048)
    ap.add_argument("--decode-len", type=int, default=32)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--window", type=int, default=32)
    ap.add_argument("--window-sizes", default="128,64,32,16,8,4,2,1")
    return ap.parse_args()


def main():
    args = parse_args()
    if args.trace:
        trace = read_trace_file(args.trace)
    else:
        trace = generate_synthetic_trace(
            num_layers=2, num_q_heads=4, num_kv_heads=2, head_dim=32,
            prompt_len=args.prompt_len, decode_len=args.decode_len, seed=args.seed,
        )
    h = trace.header

    print("== similarity to the true decode window, by condition ==")
    print(f"{'condition':>12} {'pre-rope':>10} {'post-rope':>10}")
    for cond in QueryCondition:
        rep = similarity_experiment(trace, cond, trials=args.trials,
                                    seed=args.seed, window=args.window)
        print(f"{cond.value:>12} {rep.pre_rope:>10.4f} {rep.post_rope:>10.4f}")

    print("\n== post-rotation similarity vs window anchor ==")
    offsets = default_offset_grid(h.prompt_len, h.prompt_len)
    curve = offset_decay_curve(trace, offsets, window=args.window)
    print(f"true start {curve.true_start}, spearman rho {curve.spearman_rho:.4f}")
    for off, sim in curve.points:
        print(f"  anchor {off:>6}  distance {curve.true_start - off:>6}  sim {sim:.6f}")

    print("\n== window-size alignment with the decode oracle ==")
    sizes = [int(v) for v in args.window_sizes.split(",")]
    print(f"{'policy':>10} {'window':>7} {'cosine':>10}")
    for row in window_attention_alignment(trace, sizes):
        print(f"{row.policy:>10} {row.window:>7} {row.mean_cosine:>10.4f}")


if __name__ == "__main__":
    main()
