"""Exact attention rows and windowed importance accumulation.

Everything here materializes full attention rows in float64; there are no
approximate or fused kernels. Importance of a prompt token is the total
softmax attention mass it receives from a window of probe queries, which is
the quantity every attention-guided eviction policy in this package ranks.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidConfig,
    InvalidDimension,
    InvalidInput,
    MissingPseudoKeys,
)
from .rope import RopeConfig, rotate_rows
from .tensor_core import as_matrix, as_vector, softmax_stable


class VisibilityRule(enum.Enum):
    """Which keys a probe query may attend to.

    PROMPT_ONLY restricts every probe query to the prompt keys. With
    PROMPT_PLUS_PRECEDING_PSEUDO, probe query i additionally sees the keys of
    probe tokens 0..i-1, the causal order the probes would have during a real
    prefill of the extended sequence.
    """

    PROMPT_ONLY = "prompt_only"
    PROMPT_PLUS_PRECEDING_PSEUDO = "prompt_plus_preceding_pseudo"


class PoolMode(enum.Enum):
    MAX = "max"
    AVG = "avg"


@dataclass(frozen=True)
class AttentionRow:
    """One softmax-normalized attention distribution over a key set."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        w = as_vector(self.weights)
        if w.size == 0:
            raise InvalidDimension("attention row over zero keys")
        if w.min() < 0.0 or w.max() > 1.0 or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidInput("attention row must be a probability vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class ImportanceScores:
    """Per-prompt-token accumulated attention mass for one (layer, head)."""

    scores: np.ndarray
    head: int = -1
    layer: int = -1

    def __post_init__(self) -> None:
        s = as_vector(self.scores)
        if s.size and s.min() < 0.0:
            raise InvalidInput("importance scores are non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)


def attention_row(q, keys, d_k: int | None = None) -> AttentionRow:
    """Scaled dot-product attention of one query over a key matrix."""
    qv = as_vector(q)
    km = as_matrix(keys)
    if km.shape[0] == 0:
        raise InvalidDimension("attention requires at least one key")
    if d_k is None:
        d_k = qv.shape[0]
    if qv.shape[0] != d_k or km.shape[1] != d_k:
        raise InvalidDimension(
            f"query dim {qv.shape[0]}, key dim {km.shape[1]} and d_k {d_k} must agree"
        )
    logits = km @ qv / math.sqrt(d_k)
    return AttentionRow(softmax_stable(logits))


def _masked_row_softmax(logits: np.ndarray, visible: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the visible entries; hidden entries get weight 0."""
    masked = np.where(visible, logits, -np.inf)
    m = masked.max(axis=1, keepdims=True)
    e = np.exp(masked - m)
    e[~visible] = 0.0
    return e / e.sum(axis=1, keepdims=True)


def accumulate_importance(
    window_queries,
    keys,
    key_positions,
    prompt_len: int,
    rule: VisibilityRule = VisibilityRule.PROMPT_PLUS_PRECEDING_PSEUDO,
    rope_cfg: RopeConfig | None = None,
    *,
    head: int = -1,
    layer: int = -1,
) -> ImportanceScores:
    """Sum each probe query's attention over the prompt keys.

    ``window_queries`` is a sequence of (pre-rotation vector, position id)
    pairs. ``keys`` holds pre-rotation key rows: the first ``prompt_len`` rows
    are prompt keys and any further rows are the probe tokens' own keys, one
    per probe query, in probe order. Rotation is applied here at the supplied
    positions before the dot products.

    Under PROMPT_ONLY the output sums to exactly the number of probe queries;
    under PROMPT_PLUS_PRECEDING_PSEUDO some mass leaks to the probe keys, so
    the output sums to at most that. Output length equals ``prompt_len``.
    """
    km = as_matrix(keys)
    pos = np.asarray(key_positions, dtype=np.int64)
    if pos.ndim != 1 or pos.shape[0] != km.shape[0]:
        raise InvalidDimension("one position id per key row is required")
    if prompt_len < 1 or km.shape[0] < prompt_len:
        raise InvalidInput(f"prompt_len {prompt_len} inconsistent with {km.shape[0]} key rows")
    n_queries = len(window_queries)
    if n_queries == 0:
        raise InvalidInput("at least one window query is required")
    if rule is VisibilityRule.PROMPT_PLUS_PRECEDING_PSEUDO and km.shape[0] < prompt_len + n_queries:
        raise MissingPseudoKeys(
            f"visibility rule needs {n_queries} probe keys, found {km.shape[0] - prompt_len}"
        )
    if rope_cfg is None:
        rope_cfg = RopeConfig(head_dim=km.shape[1])

    qm = np.stack([as_vector(q) for q, _ in window_queries])
    qpos = np.asarray([int(p) for _, p in window_queries], dtype=np.int64)
    if qm.shape[1] != km.shape[1]:
        raise InvalidDimension("query and key dimensions differ")
    # probe queries sit at or after the end of the visible prompt
    if int(qpos.min()) < int(pos[:prompt_len].max()):
        raise InvalidInput("window query positions must not precede visible prompt positions")

    if rule is VisibilityRule.PROMPT_ONLY:
        km = km[:prompt_len]
        pos = pos[:prompt_len]
    else:
        km = km[: prompt_len + n_queries]
        pos = pos[: prompt_len + n_queries]

    k_rot = rotate_rows(km, pos, rope_cfg)
    q_rot = rotate_rows(qm, qpos, rope_cfg)
    logits = q_rot @ k_rot.T / math.sqrt(km.shape[1])

    visible = np.ones(logits.shape, dtype=bool)
    if rule is VisibilityRule.PROMPT_PLUS_PRECEDING_PSEUDO:
        # probe query i sees probe keys 0..i-1 and nothing later
        probe_col = np.arange(n_queries)
        visible[:, prompt_len:] = probe_col[None, :] < np.arange(n_queries)[:, None]
    rows = _masked_row_softmax(logits, visible)
    scores = rows[:, :prompt_len].sum(axis=0)
    return ImportanceScores(scores=scores, head=head, layer=layer)


def pool_scores(s: ImportanceScores, kernel: int, mode: PoolMode) -> ImportanceScores:
    """1-D pooling over token index with edge replication padding.

    Output has the same length as the input. Kernel must be odd so the
    window is centered; a kernel of 1 is the identity.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidConfig(f"pooling kernel must be a positive odd integer, got {kernel}")
    if not isinstance(mode, PoolMode):
        raise InvalidConfig(f"unknown pooling mode {mode!r}")
    v = s.scores
    if kernel == 1 or v.size == 0:
        return ImportanceScores(scores=v.copy(), head=s.head, layer=s.layer)
    pad = kernel // 2
    padded = np.pad(v, pad, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, kernel)
    pooled = windows.max(axis=1) if mode is PoolMode.MAX else windows.mean(axis=1)
    return ImportanceScores(scores=pooled, head=s.head, layer=s.layer)
