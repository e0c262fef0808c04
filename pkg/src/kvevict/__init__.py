"""KV-cache eviction policies and measurement tools over attention traces."""

from .attention import (
    AttentionRow,
    ImportanceScores,
    PoolMode,
    VisibilityRule,
    accumulate_importance,
    attention_row,
    pool_scores,
)
from .bounds import SLACK, BoundReport, sweep_bounds, verify_bounds
from .errors import (
    CorruptTrace,
    DegenerateVector,
    InvalidConfig,
    InvalidDimension,
    InvalidInput,
    InvalidTrace,
    IoError,
    KvEvictError,
    MissingDecodePhase,
    MissingPseudoKeys,
    NonFiniteInput,
    NotATrace,
    UnsupportedVersion,
)
from .metrics import (
    AlignmentRow,
    OffsetDecayCurve,
    QueryCondition,
    RecallReport,
    SimilarityReport,
    compute_recall,
    gold_indices,
    gold_per_kv_head,
    offset_decay_curve,
    similarity_experiment,
    tv_similarity,
    window_attention_alignment,
)
from .policies import (
    CacheBudget,
    Content,
    EvictionResult,
    FirstLastContent,
    FixedTokensContent,
    PolicyConfig,
    PolicyKind,
    PseudoQuerySpec,
    RandomSpanContent,
    RandomTokensContent,
    allocate_pyramid_budgets,
    build_pseudo_queries,
    content_row_indices,
    dapq_scores,
    select,
    select_dapq,
    select_h2o,
    select_snapkv,
    select_streaming,
    visible_prompt_limit,
    window_anchor,
)
from .rope import RopeConfig, apply_rope, pair_frequencies, rotate_rows
from .tensor_core import (
    cosine_similarity,
    softmax_stable,
    top_k_indices,
    vector_distance,
)
from .traceio import (
    HEADER_SIZE,
    AttentionTrace,
    LayerView,
    RopeLayout,
    TraceHeader,
    generate_synthetic_trace,
    read_trace,
    read_trace_bytes,
    read_trace_file,
    trace_byte_size,
    trace_to_bytes,
    write_trace,
    write_trace_file,
)

__version__ = "0.1.0"
