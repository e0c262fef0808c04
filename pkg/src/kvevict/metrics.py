"""Measurement apparatus: recall against the decode-time oracle, pseudo-query
similarity experiments, position-offset decay and window alignment tables.

The recall oracle asks: of the prompt tokens the true decode queries would
have ranked into the budget, what fraction did an observation window rank in?
Everything upstream of the final division is integer set arithmetic, so a
recall value is exact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import InvalidConfig, InvalidInput, MissingDecodePhase
from .policies import (
    FirstLastContent,
    PolicyConfig,
    PolicyKind,
    PseudoQuerySpec,
    dapq_scores,
)
from .rope import RopeConfig, rotate_rows
from .tensor_core import (
    as_index_set,
    as_matrix,
    cosine_similarity,
    top_k_indices,
    vector_distance,
)
from .traceio import AttentionTrace, LayerView


@dataclass
class RecallReport:
    """One gold-vs-predicted comparison at a budget."""

    gold: np.ndarray
    pred: np.ndarray
    recall: float
    budget: int
    window_desc: str = ""


def _accumulated_attention(
    queries: np.ndarray,
    query_positions: np.ndarray,
    keys: np.ndarray,
    key_positions: np.ndarray,
    rope_cfg: RopeConfig,
) -> np.ndarray:
    """Sum of each (rotated) query's softmax row over the (rotated) keys."""
    k_rot = rotate_rows(keys, key_positions, rope_cfg)
    q_rot = rotate_rows(queries, query_positions, rope_cfg)
    logits = q_rot @ k_rot.T / math.sqrt(keys.shape[1])
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    rows = e / e.sum(axis=1, keepdims=True)
    return rows.sum(axis=0)


def gold_indices(
    response_queries,
    keys,
    key_positions,
    budget: int,
    rope_cfg: RopeConfig,
    query_positions=None,
) -> np.ndarray:
    """Budget-sized set of prompt tokens most attended by the true responses.

    Every response query votes with its full softmax attention row over every
    prompt key; the rows are summed and the top ``budget`` column totals win.
    Response queries default to consecutive positions right after the last
    key, which is where decode steps sit in a trace.
    """
    q = as_matrix(response_queries)
    if q.shape[0] == 0:
        raise InvalidInput("gold set needs at least one response query")
    k = as_matrix(keys)
    if budget < 1:
        raise InvalidConfig(f"budget must be >= 1, got {budget}")
    pos = np.asarray(key_positions, dtype=np.int64)
    if pos.shape[0] != k.shape[0]:
        raise InvalidInput("one position per key row is required")
    if query_positions is None:
        start = int(pos.max()) + 1
        query_positions = np.arange(start, start + q.shape[0], dtype=np.int64)
    else:
        query_positions = np.asarray(query_positions, dtype=np.int64)
    totals = _accumulated_attention(q, query_positions, k, pos, rope_cfg)
    return top_k_indices(totals, budget)


def gold_per_kv_head(layer: LayerView, budget: int) -> list[np.ndarray]:
    """Gold sets for one layer, one per kv head, group query scores summed."""
    if layer.decode_len == 0:
        raise MissingDecodePhase("trace has no decode queries to build the gold set from")
    out = []
    for g in range(layer.num_kv_heads):
        totals = np.zeros(layer.prompt_len)
        for h in layer.query_heads_for(g):
            totals += _accumulated_attention(
                layer.decode_queries[h],
                layer.decode_positions,
                layer.prompt_keys[g],
                layer.prompt_positions,
                layer.rope,
            )
        out.append(top_k_indices(totals, budget))
    return out


def compute_recall(gold, pred) -> float:
    """|gold ∩ pred| / |gold| with exact integer set arithmetic."""
    g = as_index_set(gold)
    p = as_index_set(pred)
    if g.size == 0:
        raise InvalidInput("gold set must be non-empty")
    hit = int(np.intersect1d(g, p).size)
    return hit / int(g.size)


def tv_similarity(a, b) -> float:
    """1 minus half the L1 distance between two attention distributions."""
    wa = np.asarray(getattr(a, "weights", a), dtype=np.float64)
    wb = np.asarray(getattr(b, "weights", b), dtype=np.float64)
    return 1.0 - 0.5 * vector_distance(wa, wb, "l1")


# ---------------------------------------------------------------------------
# pseudo-query similarity experiments


class QueryCondition(enum.Enum):
    """Content/position factorial for pseudo-vs-true query similarity.

    Content is either the true decode queries themselves (same) or query rows
    sampled from elsewhere in the prompt (different); positions are either
    the true decode positions (same) or a random span inside the prompt
    (different).
    """

    SAME_CONTENT_SAME_POSITION = "sc_sp"
    DIFFERENT_CONTENT_SAME_POSITION = "dc_sp"
    SAME_CONTENT_DIFFERENT_POSITION = "sc_dp"
    DIFFERENT_CONTENT_DIFFERENT_POSITION = "dc_dp"

    @property
    def same_content(self) -> bool:
        return self in (
            QueryCondition.SAME_CONTENT_SAME_POSITION,
            QueryCondition.SAME_CONTENT_DIFFERENT_POSITION,
        )

    @property
    def same_position(self) -> bool:
        return self in (
            QueryCondition.SAME_CONTENT_SAME_POSITION,
            QueryCondition.DIFFERENT_CONTENT_SAME_POSITION,
        )


AGGREGATION = "mean cosine per (layer, query head, window slot)"


@dataclass
class SimilarityReport:
    condition: QueryCondition
    pre_rope: float
    post_rope: float
    trials: int
    per_trial: list  # (pre, post) pairs, one per trial
    window: int
    aggregation: str = AGGREGATION


def _window_len(trace: AttentionTrace, window: int) -> int:
    if trace.header.decode_len == 0:
        raise MissingDecodePhase("trace has no decode-phase queries")
    if window < 1:
        raise InvalidConfig(f"window must be >= 1, got {window}")
    return min(window, trace.header.decode_len)


def similarity_experiment(
    trace: AttentionTrace,
    condition: QueryCondition,
    trials: int,
    seed: int,
    window: int = 32,
) -> SimilarityReport:
    """Cosine similarity between a pseudo window and the true decode window.

    For each trial the pseudo window is built per the condition, compared
    slot-by-slot against the first ``window`` decode queries, before and
    after rotation, and averaged uniformly over layers, query heads and
    slots. Same-position conditions give pre == post because rotating both
    sides at one position preserves the angle; different-position conditions
    are where rotation misalignment shows up.
    """
    if trials < 1:
        raise InvalidConfig(f"trials must be >= 1, got {trials}")
    w = _window_len(trace, window)
    prompt_len = trace.header.prompt_len
    if not condition.same_content and prompt_len < w:
        raise InvalidConfig("prompt too short to sample different content from")
    root = np.random.SeedSequence(seed)
    layers = [trace.layer(i) for i in range(trace.header.num_layers)]
    true_positions = layers[0].decode_positions[:w]

    per_trial = []
    for child in root.spawn(trials):
        rng = np.random.default_rng(child)
        if condition.same_content:
            content_rows = None
        else:
            content_rows = rng.choice(prompt_len, size=w, replace=False)
        if condition.same_position:
            positions = true_positions
        else:
            start = int(rng.integers(0, prompt_len - w + 1))
            positions = np.arange(start, start + w, dtype=np.int64)

        pre_vals, post_vals = [], []
        for layer in layers:
            for h in range(layer.num_q_heads):
                true_q = layer.decode_queries[h][:w]
                pseudo_q = true_q if content_rows is None else layer.prompt_queries[h][content_rows]
                true_rot = rotate_rows(true_q, true_positions, layer.rope)
                pseudo_rot = rotate_rows(pseudo_q, positions, layer.rope)
                for i in range(w):
                    pre_vals.append(cosine_similarity(pseudo_q[i], true_q[i]))
                    post_vals.append(cosine_similarity(pseudo_rot[i], true_rot[i]))
        per_trial.append((float(np.mean(pre_vals)), float(np.mean(post_vals))))

    pre = float(np.mean([p for p, _ in per_trial]))
    post = float(np.mean([q for _, q in per_trial]))
    return SimilarityReport(
        condition=condition, pre_rope=pre, post_rope=post,
        trials=trials, per_trial=per_trial, window=w,
    )


@dataclass
class OffsetDecayCurve:
    points: list  # (offset, mean similarity) pairs in input order
    spearman_rho: float
    true_start: int
    window: int


def offset_decay_curve(
    trace: AttentionTrace,
    offsets,
    seed: int = 0,
    window: int = 32,
) -> OffsetDecayCurve:
    """Post-rotation similarity of the true window re-anchored at each offset.

    Content is held fixed to the true decode queries; only the starting
    position of the window moves. At the true start the similarity is exactly
    1. The trend statistic is the rank correlation between similarity and the
    absolute distance from the true start, so a decaying curve gives a
    negative value. ``seed`` only feeds the report provenance; the curve
    itself is deterministic.
    """
    del seed
    w = _window_len(trace, window)
    prompt_len = trace.header.prompt_len
    layers = [trace.layer(i) for i in range(trace.header.num_layers)]
    true_positions = layers[0].decode_positions[:w]
    true_start = int(true_positions[0])

    offsets = [int(o) for o in offsets]
    for o in offsets:
        if not 0 <= o <= prompt_len:
            raise InvalidConfig(f"offset {o} outside [0, {prompt_len}]")
    points = []
    for o in offsets:
        positions = np.arange(o, o + w, dtype=np.int64)
        vals = []
        for layer in layers:
            for h in range(layer.num_q_heads):
                true_q = layer.decode_queries[h][:w]
                true_rot = rotate_rows(true_q, true_positions, layer.rope)
                moved_rot = rotate_rows(true_q, positions, layer.rope)
                for i in range(w):
                    vals.append(cosine_similarity(moved_rot[i], true_rot[i]))
        points.append((o, float(np.mean(vals))))

    if len(points) >= 2:
        dist = [abs(o - true_start) for o, _ in points]
        sims = [s for _, s in points]
        rho = float(stats.spearmanr(dist, sims).statistic)
    else:
        rho = float("nan")
    return OffsetDecayCurve(points=points, spearman_rho=rho, true_start=true_start, window=w)


# ---------------------------------------------------------------------------
# window attention alignment


ALIGNMENT_POLICIES = ("dapq", "snapkv", "decode")


@dataclass
class AlignmentRow:
    policy: str
    window: int
    mean_cosine: float


def _scaled_spec(template: PseudoQuerySpec, w: int) -> PseudoQuerySpec:
    """Re-size a pseudo window spec to ``w`` slots, keeping its character."""
    s = template.strategy
    if isinstance(s, FirstLastContent):
        first = min(4, w // 8)
        strategy = FirstLastContent(first=first, last=w - first)
    else:
        strategy = s
    return PseudoQuerySpec(
        length=w,
        strategy=strategy,
        position_offset=template.position_offset,
        insert_index=template.insert_index,
    )


def window_attention_alignment(
    trace: AttentionTrace,
    window_sizes,
    policies=("dapq", "snapkv"),
    spec_template: PseudoQuerySpec | None = None,
    cfg: PolicyConfig | None = None,
) -> list[AlignmentRow]:
    """Cosine alignment of window attention with decode-time attention.

    For each window size, each policy's aggregated (summed over window slots
    and grouped query heads) attention over the prompt keys is compared with
    the decode queries' aggregated attention, per (layer, kv head), and the
    cosines are averaged. The ``decode`` policy aggregates the first ``w``
    decode queries themselves, so at full decode length it scores exactly 1.
    """
    if trace.header.decode_len == 0:
        raise MissingDecodePhase("alignment needs decode-phase ground truth")
    spec_template = spec_template or PseudoQuerySpec()
    cfg = cfg or PolicyConfig(kind=PolicyKind.DAPQ)
    prompt_len = trace.header.prompt_len
    sizes = [int(w) for w in window_sizes]
    for w in sizes:
        if not 1 <= w <= prompt_len:
            raise InvalidConfig(f"window size {w} outside [1, {prompt_len}]")
    for p in policies:
        if p not in ALIGNMENT_POLICIES:
            raise InvalidConfig(f"unknown alignment policy {p!r}")
    layers = [trace.layer(i) for i in range(trace.header.num_layers)]

    gt = []  # per (layer, kv head) accumulated decode attention
    for layer in layers:
        per_head = []
        for g in range(layer.num_kv_heads):
            totals = np.zeros(layer.prompt_len)
            for h in layer.query_heads_for(g):
                totals += _accumulated_attention(
                    layer.decode_queries[h], layer.decode_positions,
                    layer.prompt_keys[g], layer.prompt_positions, layer.rope,
                )
            per_head.append(totals)
        gt.append(per_head)

    rows = []
    for policy in policies:
        for w in sizes:
            vals = []
            for li, layer in enumerate(layers):
                vectors = _window_vectors(layer, policy, w, spec_template, cfg)
                for g in range(layer.num_kv_heads):
                    vals.append(cosine_similarity(vectors[g], gt[li][g]))
            rows.append(AlignmentRow(policy=policy, window=w, mean_cosine=float(np.mean(vals))))
    return rows


def _window_vectors(
    layer: LayerView,
    policy: str,
    w: int,
    spec_template: PseudoQuerySpec,
    cfg: PolicyConfig,
) -> list[np.ndarray]:
    """Aggregated window attention over prompt keys, one vector per kv head."""
    if policy == "dapq":
        spec = _scaled_spec(spec_template, w)
        return [imp.scores for imp in dapq_scores(layer, spec, cfg)]
    out = []
    if policy == "decode":
        steps = min(w, layer.decode_len)
        for g in range(layer.num_kv_heads):
            totals = np.zeros(layer.prompt_len)
            for h in layer.query_heads_for(g):
                totals += _accumulated_attention(
                    layer.decode_queries[h][:steps], layer.decode_positions[:steps],
                    layer.prompt_keys[g], layer.prompt_positions, layer.rope,
                )
            out.append(totals)
        return out
    # snapkv: the last w prompt queries vote under the causal mask
    from .policies import _causal_column_sums

    for g in range(layer.num_kv_heads):
        out.append(_causal_column_sums(layer, g, layer.prompt_len - w))
    return out
