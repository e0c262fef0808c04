"""KV-cache eviction policies over attention traces.

Four selection rules share one interface: given a layer view and a per-head
token budget, return the prompt indices each kv head keeps.

* ``select_dapq`` scores prompt tokens by the attention they receive from a
  window of pseudo queries placed at positions after the prompt. Content for
  the pseudo window is copied from prompt rows (first+last span, sampled
  tokens, a sampled span, or fixed token ids); only the assigned position ids
  make it "future". The pseudo tokens themselves are never retained and
  decoding resumes at the first position after the prompt.
* ``select_snapkv`` scores the non-window prefix by attention from the last
  ``window`` prompt queries, pools the scores, and always keeps the window.
* ``select_h2o`` accumulates attention column sums over the full causal
  prefill and always keeps the most recent tokens.
* ``select_streaming`` keeps attention sinks plus a recency window, with no
  attention computation at all.

When several query heads share one kv head, their score vectors are summed
before ranking, and selection stays independent per (layer, kv head).
Ranking ties always break toward the lower token index.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .attention import (
    ImportanceScores,
    PoolMode,
    VisibilityRule,
    _masked_row_softmax,
    accumulate_importance,
    pool_scores,
)
from .errors import InvalidConfig, InvalidInput
from .rope import rotate_rows
from .tensor_core import top_k_indices
from .traceio import LayerView


# ---------------------------------------------------------------------------
# pseudo-query window construction


@dataclass(frozen=True)
class FirstLastContent:
    """First ``first`` and last ``last`` prompt tokens, in prompt order."""

    first: int = 4
    last: int = 28


@dataclass(frozen=True)
class RandomTokensContent:
    """Individual prompt tokens sampled without replacement, seeded."""

    seed: int = 0


@dataclass(frozen=True)
class RandomSpanContent:
    """One consecutive span of prompt tokens with a seeded start."""

    seed: int = 0


@dataclass(frozen=True)
class FixedTokensContent:
    """A fixed token-id sequence, cycled to the window length."""

    token_ids: tuple = ()


Content = Union[FirstLastContent, RandomTokensContent, RandomSpanContent, FixedTokensContent]


@dataclass(frozen=True)
class PseudoQuerySpec:
    """How to build the pseudo-query window.

    ``length`` pseudo tokens get positions ``anchor .. anchor+length-1`` where
    ``anchor`` is the first position after the prompt, shifted by
    ``position_offset``, or ``insert_index`` when given. An insert point
    before the end of the prompt also truncates what the window can see to
    the tokens before it.
    """

    length: int = 32
    strategy: Content = FirstLastContent()
    position_offset: int = 0
    insert_index: int | None = None

    def __post_init__(self) -> None:
        if self.length < 1:
            raise InvalidConfig(f"pseudo window length must be >= 1, got {self.length}")
        s = self.strategy
        if isinstance(s, FirstLastContent):
            if s.first < 0 or s.last < 0:
                raise InvalidConfig("first/last counts must be >= 0")
            if s.first + s.last != self.length:
                raise InvalidConfig(
                    f"first+last ({s.first}+{s.last}) must equal window length {self.length}"
                )
        elif isinstance(s, FixedTokensContent):
            if len(s.token_ids) == 0:
                raise InvalidConfig("fixed content needs at least one token id")
        elif not isinstance(s, (RandomTokensContent, RandomSpanContent)):
            raise InvalidConfig(f"unknown content strategy {s!r}")
        if self.insert_index is not None and self.insert_index < 0:
            raise InvalidConfig("insert_index must be >= 0")


def content_row_indices(spec: PseudoQuerySpec, prompt_len: int, token_ids=None) -> np.ndarray:
    """Prompt row indices supplying the pseudo window's content, in window order.

    The choice is made once per trace at the token level and shared by every
    layer and head. Fixed token ids map to their first prompt occurrence and
    fall back deterministically to ``id % prompt_len`` when absent.
    """
    n = spec.length
    s = spec.strategy
    if isinstance(s, FixedTokensContent):
        if token_ids is None:
            raise InvalidConfig("fixed content selection requires prompt token ids")
        ids = np.asarray(token_ids, dtype=np.int64)
        first_at = {}
        for i, t in enumerate(ids.tolist()):
            first_at.setdefault(t, i)
        cycled = [int(s.token_ids[i % len(s.token_ids)]) for i in range(n)]
        rows = [first_at.get(t, t % prompt_len) for t in cycled]
        return np.asarray(rows, dtype=np.int64)
    if prompt_len < n:
        raise InvalidConfig(f"prompt of {prompt_len} tokens cannot supply a window of {n}")
    if isinstance(s, FirstLastContent):
        return np.concatenate(
            [np.arange(s.first), np.arange(prompt_len - s.last, prompt_len)]
        ).astype(np.int64)
    if isinstance(s, RandomTokensContent):
        rng = np.random.default_rng(np.random.SeedSequence(s.seed))
        return rng.choice(prompt_len, size=n, replace=False).astype(np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(s.seed))
    start = int(rng.integers(0, prompt_len - n + 1))
    return np.arange(start, start + n, dtype=np.int64)


def window_anchor(spec: PseudoQuerySpec, prompt_len: int) -> int:
    """First position id assigned to the pseudo window."""
    if spec.insert_index is not None and spec.insert_index > prompt_len:
        raise InvalidConfig(
            f"insert_index {spec.insert_index} exceeds prompt length {prompt_len}"
        )
    base = prompt_len if spec.insert_index is None else spec.insert_index
    anchor = base + spec.position_offset
    if anchor < 0:
        raise InvalidConfig("pseudo window anchor position must be >= 0")
    return anchor


def visible_prompt_limit(spec: PseudoQuerySpec, prompt_len: int) -> int:
    """How many leading prompt tokens the pseudo window may attend to."""
    if spec.insert_index is None:
        return prompt_len
    return min(spec.insert_index, prompt_len)


def build_pseudo_queries(prompt_rows, spec: PseudoQuerySpec, token_ids=None) -> list:
    """Assemble one head's pseudo window as (pre-rotation vector, position) pairs.

    ``prompt_rows`` is that head's (prompt_len, head_dim) matrix of
    pre-rotation query rows; content selection copies rows out of it and the
    returned positions start at the window anchor.
    """
    rows = np.asarray(prompt_rows, dtype=np.float64)
    if rows.ndim != 2:
        raise InvalidInput(f"expected a (prompt_len, head_dim) matrix, got shape {rows.shape}")
    prompt_len = rows.shape[0]
    picks = content_row_indices(spec, prompt_len, token_ids=token_ids)
    anchor = window_anchor(spec, prompt_len)
    if visible_prompt_limit(spec, prompt_len) == 0:
        raise InvalidConfig("insert_index 0 leaves the window with nothing to attend to")
    return [(rows[r].copy(), anchor + i) for i, r in enumerate(picks.tolist())]


# ---------------------------------------------------------------------------
# policy configuration and result


class PolicyKind(enum.Enum):
    DAPQ = "dapq"
    SNAPKV = "snapkv"
    H2O = "h2o"
    STREAMING_LLM = "streamingllm"


@dataclass(frozen=True)
class CacheBudget:
    """Number of prompt tokens each kv head may retain after prefill."""

    per_head_tokens: int

    def __post_init__(self) -> None:
        if self.per_head_tokens < 1:
            raise InvalidConfig(f"budget must be >= 1, got {self.per_head_tokens}")


@dataclass(frozen=True)
class PolicyConfig:
    kind: PolicyKind
    window: int = 32  # observation window for snapkv; default recency for h2o
    kernel: int = 7  # pooling kernel width, odd
    pooling: PoolMode = PoolMode.MAX
    sink_size: int = 4  # leading tokens kept by streaming
    recent_size: int | None = None  # h2o recency override, defaults to window
    visibility: VisibilityRule = VisibilityRule.PROMPT_PLUS_PRECEDING_PSEUDO
    dapq_pooling: bool = False  # pseudo-query scores are unpooled by default
    h2o_normalize: bool = False  # divide column sums by observation counts
    pyramid_beta: int = 20  # schedule steepness for per-layer budgets

    def __post_init__(self) -> None:
        if self.window < 1:
            raise InvalidConfig(f"window must be >= 1, got {self.window}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidConfig(f"kernel must be a positive odd integer, got {self.kernel}")
        if self.sink_size < 0:
            raise InvalidConfig(f"sink_size must be >= 0, got {self.sink_size}")
        if self.recent_size is not None and self.recent_size < 0:
            raise InvalidConfig(f"recent_size must be >= 0, got {self.recent_size}")
        if self.pyramid_beta < 1:
            raise InvalidConfig(f"pyramid_beta must be >= 1, got {self.pyramid_beta}")

    @property
    def effective_recent(self) -> int:
        return self.window if self.recent_size is None else self.recent_size


@dataclass
class EvictionResult:
    """Retained prompt indices per kv head for one layer."""

    layer: int
    retained: list  # one sorted int64 array per kv head
    budget_used: int


def _keep_all(layer_index: int, num_kv_heads: int, prompt_len: int) -> EvictionResult:
    return EvictionResult(
        layer=layer_index,
        retained=[np.arange(prompt_len, dtype=np.int64) for _ in range(num_kv_heads)],
        budget_used=prompt_len,
    )


# ---------------------------------------------------------------------------
# policies


def dapq_scores(layer: LayerView, spec: PseudoQuerySpec, cfg: PolicyConfig) -> list[ImportanceScores]:
    """Pseudo-window importance per kv head, summed over its query heads.

    Scores for prompt tokens the window cannot see (at or past an insert
    point) are zero. Output vectors always have length ``prompt_len``.
    """
    prompt_len = layer.prompt_len
    visible = visible_prompt_limit(spec, prompt_len)
    if visible < 1:
        raise InvalidConfig("insert_index 0 leaves the window with nothing to attend to")
    picks = content_row_indices(spec, prompt_len, token_ids=layer.token_ids)
    anchor = window_anchor(spec, prompt_len)
    positions = [anchor + i for i in range(spec.length)]

    out = []
    for g in range(layer.num_kv_heads):
        keys = layer.prompt_keys[g][:visible]
        key_positions = layer.prompt_positions[:visible]
        if cfg.visibility is VisibilityRule.PROMPT_PLUS_PRECEDING_PSEUDO:
            keys = np.concatenate([keys, layer.prompt_keys[g][picks]], axis=0)
            key_positions = np.concatenate(
                [key_positions, np.asarray(positions, dtype=np.int64)]
            )
        total = np.zeros(visible)
        for h in layer.query_heads_for(g):
            window = list(zip(layer.prompt_queries[h][picks], positions))
            imp = accumulate_importance(
                window, keys, key_positions, visible, cfg.visibility, layer.rope,
                head=h, layer=layer.layer_index,
            )
            total += imp.scores
        full = np.zeros(prompt_len)
        full[:visible] = total
        out.append(ImportanceScores(scores=full, head=g, layer=layer.layer_index))
    return out


def select_dapq(
    layer: LayerView,
    spec: PseudoQuerySpec,
    budget: CacheBudget,
    cfg: PolicyConfig | None = None,
) -> EvictionResult:
    """Keep the prompt tokens most attended by the pseudo-query window.

    The window's own keys are never candidates for retention, so the result
    only ever contains prompt indices and decoding can resume at the first
    position after the prompt.
    """
    cfg = cfg or PolicyConfig(kind=PolicyKind.DAPQ)
    b = budget.per_head_tokens
    prompt_len = layer.prompt_len
    if b >= prompt_len:
        return _keep_all(layer.layer_index, layer.num_kv_heads, prompt_len)
    retained = []
    for imp in dapq_scores(layer, spec, cfg):
        scores = pool_scores(imp, cfg.kernel, cfg.pooling).scores if cfg.dapq_pooling else imp.scores
        retained.append(top_k_indices(scores, b))
    return EvictionResult(layer=layer.layer_index, retained=retained, budget_used=b)


def _causal_column_sums(layer: LayerView, kv_head: int, first_query: int) -> np.ndarray:
    """Column sums of causal prefill attention for queries ``first_query..``.

    Returns the summed attention mass received by every prompt key from the
    chosen query rows of every query head in the group, honoring the causal
    mask. Queries are processed in blocks to bound memory on long prompts.
    """
    prompt_len = layer.prompt_len
    k_rot = rotate_rows(layer.prompt_keys[kv_head], layer.prompt_positions, layer.rope)
    scale = 1.0 / math.sqrt(layer.head_dim)
    total = np.zeros(prompt_len)
    block = 512
    col = np.arange(prompt_len)
    for h in layer.query_heads_for(kv_head):
        q_rot = rotate_rows(layer.prompt_queries[h], layer.prompt_positions, layer.rope)
        for start in range(first_query, prompt_len, block):
            stop = min(start + block, prompt_len)
            logits = q_rot[start:stop] @ k_rot.T * scale
            visible = col[None, :] <= np.arange(start, stop)[:, None]
            rows = _masked_row_softmax(logits, visible)
            total += rows.sum(axis=0)
    return total


def select_snapkv(layer: LayerView, budget: CacheBudget, cfg: PolicyConfig | None = None) -> EvictionResult:
    """Observation-window policy: the last ``window`` prompt queries vote.

    Attention column sums over the pre-window keys are pooled along the token
    axis so neighborhoods of a hit survive, the top scores fill the budget
    left after the window, and the window itself is always retained.
    """
    cfg = cfg or PolicyConfig(kind=PolicyKind.SNAPKV)
    b = budget.per_head_tokens
    w = cfg.window
    prompt_len = layer.prompt_len
    if w > prompt_len:
        raise InvalidConfig(f"window {w} exceeds prompt length {prompt_len}")
    if w > b:
        raise InvalidConfig(f"window {w} exceeds budget {b}")
    if b >= prompt_len:
        return _keep_all(layer.layer_index, layer.num_kv_heads, prompt_len)
    window_idx = np.arange(prompt_len - w, prompt_len, dtype=np.int64)
    retained = []
    for g in range(layer.num_kv_heads):
        sums = _causal_column_sums(layer, g, prompt_len - w)[: prompt_len - w]
        imp = ImportanceScores(scores=sums, head=g, layer=layer.layer_index)
        pooled = pool_scores(imp, cfg.kernel, cfg.pooling).scores
        picked = top_k_indices(pooled, b - w)
        retained.append(np.sort(np.concatenate([picked, window_idx])))
    return EvictionResult(layer=layer.layer_index, retained=retained, budget_used=b)


def select_h2o(layer: LayerView, budget: CacheBudget, cfg: PolicyConfig | None = None) -> EvictionResult:
    """Heavy-hitter policy: cumulative attention over the full causal prefill.

    Column sums are not length-normalized by default, matching the usual
    accumulated-mass formulation; set ``h2o_normalize`` to divide each column
    by how many queries could see it. The most recent ``recent_size`` tokens
    are always retained.
    """
    cfg = cfg or PolicyConfig(kind=PolicyKind.H2O)
    b = budget.per_head_tokens
    recent = cfg.effective_recent
    prompt_len = layer.prompt_len
    if recent > b:
        raise InvalidConfig(f"recent_size {recent} exceeds budget {b}")
    if b >= prompt_len:
        return _keep_all(layer.layer_index, layer.num_kv_heads, prompt_len)
    recent_idx = np.arange(prompt_len - recent, prompt_len, dtype=np.int64)
    retained = []
    for g in range(layer.num_kv_heads):
        sums = _causal_column_sums(layer, g, 0)
        if cfg.h2o_normalize:
            observers = layer.num_q_heads // layer.num_kv_heads * (
                prompt_len - np.arange(prompt_len, dtype=np.float64)
            )
            sums = sums / observers
        picked = top_k_indices(sums[: prompt_len - recent], b - recent)
        retained.append(np.sort(np.concatenate([picked, recent_idx])))
    return EvictionResult(layer=layer.layer_index, retained=retained, budget_used=b)


def select_streaming(
    prompt_len: int,
    budget: CacheBudget,
    cfg: PolicyConfig | None = None,
    *,
    layer_index: int = 0,
    num_kv_heads: int = 1,
) -> EvictionResult:
    """Sink-plus-recency policy; no attention is computed at all."""
    cfg = cfg or PolicyConfig(kind=PolicyKind.STREAMING_LLM)
    b = budget.per_head_tokens
    if prompt_len < 1:
        raise InvalidInput(f"prompt_len must be >= 1, got {prompt_len}")
    if b >= prompt_len:
        return _keep_all(layer_index, num_kv_heads, prompt_len)
    if cfg.sink_size >= b:
        raise InvalidConfig(f"sink_size {cfg.sink_size} must be smaller than budget {b}")
    sinks = np.arange(min(cfg.sink_size, prompt_len), dtype=np.int64)
    recent = np.arange(max(prompt_len - (b - cfg.sink_size), 0), prompt_len, dtype=np.int64)
    kept = np.union1d(sinks, recent)
    return EvictionResult(
        layer=layer_index,
        retained=[kept.copy() for _ in range(num_kv_heads)],
        budget_used=int(kept.size),
    )


def select(
    layer: LayerView,
    budget: CacheBudget,
    cfg: PolicyConfig,
    spec: PseudoQuerySpec | None = None,
) -> EvictionResult:
    """Dispatch to the policy named by ``cfg.kind``."""
    if cfg.kind is PolicyKind.DAPQ:
        if spec is None:
            raise InvalidConfig("the pseudo-query policy requires a PseudoQuerySpec")
        return select_dapq(layer, spec, budget, cfg)
    if cfg.kind is PolicyKind.SNAPKV:
        return select_snapkv(layer, budget, cfg)
    if cfg.kind is PolicyKind.H2O:
        return select_h2o(layer, budget, cfg)
    return select_streaming(
        layer.prompt_len, budget, cfg,
        layer_index=layer.layer_index, num_kv_heads=layer.num_kv_heads,
    )


def allocate_pyramid_budgets(
    per_layer_budget: int,
    num_layers: int,
    window: int = 32,
    beta: int = 20,
) -> list[int]:
    """Linearly decreasing per-layer budgets that preserve the global total.

    Layer 0 gets the most, the last layer the least, every layer at least
    ``max(window, 1)``, and the budgets sum to exactly
    ``per_layer_budget * num_layers``. ``beta`` steers how small the last
    layer may get before the window floor binds.
    """
    b = per_layer_budget
    if num_layers < 1:
        raise InvalidConfig(f"num_layers must be >= 1, got {num_layers}")
    if b < 1:
        raise InvalidConfig(f"budget must be >= 1, got {b}")
    if beta < 1:
        raise InvalidConfig(f"beta must be >= 1, got {beta}")
    floor_tokens = max(window, 1)
    if b < floor_tokens:
        raise InvalidConfig(f"budget {b} is below the per-layer floor {floor_tokens}")
    if num_layers == 1:
        return [b]
    low = max(floor_tokens, b // beta)
    high = 2 * b - low
    # linspace pins both endpoints exactly, so the floor below cannot erode them
    raw = np.linspace(high, low, num_layers)
    budgets = [int(math.floor(v)) for v in raw]
    shortfall = b * num_layers - sum(budgets)
    # hand the rounding remainder to the widest layers, keeping the order
    for l in range(shortfall):
        budgets[l % num_layers] += 1
    return budgets
