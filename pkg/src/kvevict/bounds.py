"""Attention-divergence bound checker.

For unit queries q and q' with cosine similarity s over a shared key set with
largest key norm K_max, the attention distributions they induce can differ by
at most

    ||alpha - alpha'||_1  <=  K_max * sqrt(2 * (1 - s)) / sqrt(d_k)

because the score rows differ entrywise by at most that much (Cauchy-Schwarz
on the chord length ||q - q'|| = sqrt(2 * (1 - s))) and softmax is
1-Lipschitz from the max norm into the L1 norm. Restated through total
variation, the induced distributions keep similarity at least
1 - K_max * sqrt(2 * (1 - s)) / (2 * sqrt(d_k)). ``verify_bounds`` evaluates
every quantity on concrete inputs and reports each inequality as
lhs <= rhs + slack.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVector, InvalidDimension
from .tensor_core import as_matrix, as_vector, softmax_stable, vector_distance

SLACK = 1e-9


@dataclass
class BoundReport:
    """All measured and bounding quantities for one (q, q', K) instance.

    Each inequality i holds when ``lhs_i <= rhs_i + SLACK``. For the
    distribution-similarity statement the theorem's lower bound goes on the
    left so the common orientation applies.
    """

    d_k: int
    sim_q: float
    k_max: float
    norm_q: float
    norm_q2: float
    lhs1: float  # L1 gap between the attention rows
    rhs1: float  # chord bound
    lhs2: float  # 1 - chord bound / 2
    rhs2: float  # total-variation similarity of the rows
    lhs4: float  # max entrywise score gap
    rhs4: float  # chord bound
    lhs5: float  # L1 gap again, as derived through the score gap
    rhs5: float  # chord bound
    holds: bool


def verify_bounds(q, q2, keys, d_k: int | None = None) -> BoundReport:
    """Evaluate the divergence bounds on one concrete instance.

    Inputs are normalized here (original norms are recorded in the report)
    because the statement is about unit queries. Zero-norm queries have no
    direction and are rejected.
    """
    qv = as_vector(q)
    qv2 = as_vector(q2)
    km = as_matrix(keys)
    if qv.shape != qv2.shape:
        raise InvalidDimension(f"query shapes differ: {qv.shape} vs {qv2.shape}")
    if d_k is None:
        d_k = qv.shape[0]
    if qv.shape[0] != d_k or km.shape[1] != d_k:
        raise InvalidDimension("query dimension, key dimension and d_k must agree")
    if km.shape[0] == 0:
        raise InvalidDimension("at least one key is required")
    norm_q = float(np.linalg.norm(qv))
    norm_q2 = float(np.linalg.norm(qv2))
    if norm_q == 0.0 or norm_q2 == 0.0:
        raise DegenerateVector("unit-query bounds are undefined for zero queries")
    u = qv / norm_q
    v = qv2 / norm_q2

    sim_q = min(1.0, max(-1.0, float(np.dot(u, v))))
    # ||u - v|| equals sqrt(2 * (1 - sim)) for unit vectors; the difference
    # norm stays accurate for nearly identical queries where the dot product
    # saturates at 1 and would round the chord (and the bound) down to zero
    delta = float(np.linalg.norm(u - v))
    k_max = float(np.max(np.linalg.norm(km, axis=1)))
    chord = k_max * delta / math.sqrt(d_k)

    s = km @ u / math.sqrt(d_k)
    s2 = km @ v / math.sqrt(d_k)
    a = softmax_stable(s)
    a2 = softmax_stable(s2)

    l1_gap = vector_distance(a, a2, "l1")
    score_gap = vector_distance(s, s2, "linf")
    tv_sim = 1.0 - 0.5 * l1_gap

    lhs1, rhs1 = l1_gap, chord
    lhs2, rhs2 = 1.0 - chord / 2.0, tv_sim
    lhs4, rhs4 = score_gap, chord
    lhs5, rhs5 = l1_gap, chord
    holds = all(
        l <= r + SLACK
        for l, r in ((lhs1, rhs1), (lhs2, rhs2), (lhs4, rhs4), (lhs5, rhs5))
    )
    return BoundReport(
        d_k=d_k, sim_q=sim_q, k_max=k_max, norm_q=norm_q, norm_q2=norm_q2,
        lhs1=lhs1, rhs1=rhs1, lhs2=lhs2, rhs2=rhs2,
        lhs4=lhs4, rhs4=rhs4, lhs5=lhs5, rhs5=rhs5, holds=holds,
    )


def max_workers_from_env() -> int:
    """Worker cap from KVEVICT_THREADS; absent or invalid means serial."""
    raw = os.environ.get("KVEVICT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def _random_instance(child: np.random.SeedSequence, d_k: int, n_keys: int):
    rng = np.random.default_rng(child)
    q = rng.normal(size=d_k)
    if rng.uniform() < 0.25:
        # stress the near-identical regime where the bound gets tight
        q2 = q + 10.0 ** rng.uniform(-8, -3) * rng.normal(size=d_k)
    else:
        q2 = rng.normal(size=d_k)
    scale = math.exp(rng.uniform(math.log(0.2), math.log(5.0)))
    keys = scale * rng.normal(size=(n_keys, d_k))
    return q, q2, keys


def sweep_bounds(
    trials: int,
    d_ks=(2, 8, 64),
    key_counts=(4, 64),
    seed: int = 0,
    max_workers: int | None = None,
):
    """Seeded random sweep of ``verify_bounds``; yields rows in a fixed order.

    Per-trial seeds are spawned from the root seed, so the sweep is
    deterministic for a given (trials, grid, seed) regardless of worker
    count. Returns a list of (d_k, n_keys, trial, BoundReport) tuples.
    """
    if max_workers is None:
        max_workers = max_workers_from_env()
    cells = [(d, n) for d in d_ks for n in key_counts]
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(cells) * trials)

    def run_cell(ci: int):
        d, n = cells[ci]
        out = []
        for t in range(trials):
            q, q2, keys = _random_instance(children[ci * trials + t], d, n)
            out.append((d, n, t, verify_bounds(q, q2, keys, d)))
        return out

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_cell = list(pool.map(run_cell, range(len(cells))))
    else:
        per_cell = [run_cell(ci) for ci in range(len(cells))]
    rows = []
    for cell_rows in per_cell:
        rows.extend(cell_rows)
    return rows
