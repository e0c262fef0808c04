"""Attention trace container, binary serialization and synthetic generation.

A trace stores everything needed to replay eviction decisions offline:
pre-rotation prompt keys and queries per layer, the decode-phase queries that
serve as ground truth, position ids and prompt token ids. Values are held in
32-bit floats exactly as stored on disk and widened to 64-bit where they
enter computation.

Binary layout (version 1, little-endian, extension ``.kvqt``):

    magic  b"KVQT"
    u16    version
    u32    num_layers, num_q_heads, num_kv_heads, head_dim,
           prompt_len, decode_len
    f64    rope_theta
    u8     rope_layout (0 interleaved, 1 half-split origin)
    u64    seed (0 for traces captured from a real model)
    u32    flags
    per layer, in order:
        f32[num_kv_heads][prompt_len][head_dim]   prompt keys
        f32[num_q_heads][prompt_len][head_dim]    prompt queries
        f32[num_q_heads][decode_len][head_dim]    decode queries
    u32[prompt_len]   prompt position ids
    u32[decode_len]   decode position ids
    u32[prompt_len]   prompt token ids

Key and query rows are always stored in the interleaved rotation layout;
``rope_layout`` records the producing runtime's native convention so the
provenance of converted captures is not lost.
"""

from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptTrace,
    InvalidConfig,
    InvalidTrace,
    IoError,
    NotATrace,
    UnsupportedVersion,
)
from .rope import RopeConfig

MAGIC = b"KVQT"
VERSION = 1
_HEADER_FMT = "<4sH6IdBQI"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)


class RopeLayout(enum.IntEnum):
    INTERLEAVED = 0
    HALF_SPLIT = 1


@dataclass
class TraceHeader:
    num_layers: int
    num_q_heads: int
    num_kv_heads: int
    head_dim: int
    prompt_len: int
    decode_len: int
    rope_theta: float = 10000.0
    rope_layout: RopeLayout = RopeLayout.INTERLEAVED
    seed: int = 0
    flags: int = 0
    version: int = VERSION

    def validate(self) -> None:
        if self.num_layers < 1 or self.num_q_heads < 1 or self.num_kv_heads < 1:
            raise InvalidTrace("layer and head counts must be >= 1")
        if self.num_q_heads % self.num_kv_heads != 0:
            raise InvalidTrace(
                f"num_q_heads {self.num_q_heads} not divisible by num_kv_heads {self.num_kv_heads}"
            )
        if self.head_dim < 2 or self.head_dim % 2 != 0:
            raise InvalidTrace(f"head_dim must be even and >= 2, got {self.head_dim}")
        if self.prompt_len < 1:
            raise InvalidTrace("prompt_len must be >= 1")
        if self.decode_len < 0:
            raise InvalidTrace("decode_len must be >= 0")
        if not self.rope_theta > 1.0:
            raise InvalidTrace(f"rope_theta must be > 1, got {self.rope_theta}")
        if self.rope_layout not in (RopeLayout.INTERLEAVED, RopeLayout.HALF_SPLIT):
            raise InvalidTrace(f"unknown rope layout {self.rope_layout}")
        if not 0 <= self.seed < 2**64:
            raise InvalidTrace("seed must fit in an unsigned 64-bit integer")

    @property
    def group_size(self) -> int:
        return self.num_q_heads // self.num_kv_heads

    def rope_config(self) -> RopeConfig:
        return RopeConfig(head_dim=self.head_dim, theta_base=self.rope_theta)


@dataclass(frozen=True)
class LayerView:
    """Float64 view of one layer plus the shared position/token metadata."""

    layer_index: int
    prompt_keys: np.ndarray  # (num_kv_heads, prompt_len, head_dim)
    prompt_queries: np.ndarray  # (num_q_heads, prompt_len, head_dim)
    decode_queries: np.ndarray  # (num_q_heads, decode_len, head_dim)
    prompt_positions: np.ndarray
    decode_positions: np.ndarray
    token_ids: np.ndarray
    rope: RopeConfig
    group_size: int

    @property
    def prompt_len(self) -> int:
        return self.prompt_keys.shape[1]

    @property
    def decode_len(self) -> int:
        return self.decode_queries.shape[1]

    @property
    def num_kv_heads(self) -> int:
        return self.prompt_keys.shape[0]

    @property
    def num_q_heads(self) -> int:
        return self.prompt_queries.shape[0]

    @property
    def head_dim(self) -> int:
        return self.prompt_keys.shape[2]

    def query_heads_for(self, kv_head: int) -> range:
        """Query heads whose scores aggregate onto the given kv head."""
        return range(kv_head * self.group_size, (kv_head + 1) * self.group_size)


@dataclass
class AttentionTrace:
    header: TraceHeader
    prompt_keys: list = field(default_factory=list)  # per layer (kvh, L_p, d) float32
    prompt_queries: list = field(default_factory=list)  # per layer (qh, L_p, d) float32
    decode_queries: list = field(default_factory=list)  # per layer (qh, dl, d) float32
    prompt_positions: np.ndarray | None = None
    decode_positions: np.ndarray | None = None
    token_ids: np.ndarray | None = None

    def validate(self) -> None:
        h = self.header
        h.validate()
        if not (len(self.prompt_keys) == len(self.prompt_queries) == len(self.decode_queries) == h.num_layers):
            raise InvalidTrace("per-layer array count does not match num_layers")
        for l in range(h.num_layers):
            k, q, dq = self.prompt_keys[l], self.prompt_queries[l], self.decode_queries[l]
            if k.shape != (h.num_kv_heads, h.prompt_len, h.head_dim):
                raise InvalidTrace(f"layer {l} prompt keys have shape {k.shape}")
            if q.shape != (h.num_q_heads, h.prompt_len, h.head_dim):
                raise InvalidTrace(f"layer {l} prompt queries have shape {q.shape}")
            if dq.shape != (h.num_q_heads, h.decode_len, h.head_dim):
                raise InvalidTrace(f"layer {l} decode queries have shape {dq.shape}")
            for arr in (k, q, dq):
                if arr.dtype != np.float32:
                    raise InvalidTrace("trace arrays must be 32-bit floats")
                if not np.all(np.isfinite(arr)):
                    raise InvalidTrace(f"layer {l} contains non-finite values")
        for name, arr, want in (
            ("prompt_positions", self.prompt_positions, h.prompt_len),
            ("decode_positions", self.decode_positions, h.decode_len),
            ("token_ids", self.token_ids, h.prompt_len),
        ):
            if arr is None or arr.shape != (want,):
                raise InvalidTrace(f"{name} must have shape ({want},)")
        if h.prompt_len > 1 and np.any(np.diff(self.prompt_positions.astype(np.int64)) <= 0):
            raise InvalidTrace("prompt positions must be strictly increasing")

    def layer(self, index: int) -> LayerView:
        if not 0 <= index < self.header.num_layers:
            raise InvalidConfig(f"layer index {index} out of range")
        return LayerView(
            layer_index=index,
            prompt_keys=self.prompt_keys[index].astype(np.float64),
            prompt_queries=self.prompt_queries[index].astype(np.float64),
            decode_queries=self.decode_queries[index].astype(np.float64),
            prompt_positions=self.prompt_positions.astype(np.int64),
            decode_positions=self.decode_positions.astype(np.int64),
            token_ids=self.token_ids.astype(np.int64),
            rope=self.header.rope_config(),
            group_size=self.header.group_size,
        )

    def layers(self):
        for i in range(self.header.num_layers):
            yield self.layer(i)


def trace_byte_size(header: TraceHeader) -> int:
    """Exact on-disk size in bytes for a trace with this header."""
    h = header
    per_layer = 4 * h.head_dim * (
        h.num_kv_heads * h.prompt_len + h.num_q_heads * h.prompt_len + h.num_q_heads * h.decode_len
    )
    tail = 4 * (h.prompt_len + h.decode_len + h.prompt_len)
    return HEADER_SIZE + h.num_layers * per_layer + tail


def write_trace(trace: AttentionTrace, sink) -> int:
    """Serialize a validated trace to a binary stream; returns bytes written."""
    trace.validate()
    h = trace.header
    buf = bytearray()
    buf += struct.pack(
        _HEADER_FMT,
        MAGIC,
        h.version,
        h.num_layers,
        h.num_q_heads,
        h.num_kv_heads,
        h.head_dim,
        h.prompt_len,
        h.decode_len,
        float(h.rope_theta),
        int(h.rope_layout),
        h.seed,
        h.flags,
    )
    for l in range(h.num_layers):
        buf += np.ascontiguousarray(trace.prompt_keys[l], dtype="<f4").tobytes()
        buf += np.ascontiguousarray(trace.prompt_queries[l], dtype="<f4").tobytes()
        buf += np.ascontiguousarray(trace.decode_queries[l], dtype="<f4").tobytes()
    buf += np.ascontiguousarray(trace.prompt_positions, dtype="<u4").tobytes()
    buf += np.ascontiguousarray(trace.decode_positions, dtype="<u4").tobytes()
    buf += np.ascontiguousarray(trace.token_ids, dtype="<u4").tobytes()
    try:
        sink.write(bytes(buf))
    except OSError as e:
        raise IoError(f"failed to write trace: {e}") from e
    return len(buf)


def write_trace_file(trace: AttentionTrace, path) -> int:
    try:
        with open(path, "wb") as f:
            return write_trace(trace, f)
    except OSError as e:
        raise IoError(f"failed to write {path}: {e}") from e


def _read_exact(source, n: int, what: str) -> bytes:
    try:
        data = source.read(n)
    except OSError as e:
        raise IoError(f"failed to read trace: {e}") from e
    if data is None or len(data) != n:
        raise CorruptTrace(f"truncated trace while reading {what}")
    return data


def read_trace(source) -> AttentionTrace:
    """Parse a binary stream into a validated trace.

    Raises NotATrace when the magic is absent, UnsupportedVersion for
    versions newer than this reader, CorruptTrace on truncation or trailing
    bytes, and InvalidTrace for structurally bad contents. No partially
    populated trace ever escapes.
    """
    try:
        head = source.read(4)
    except OSError as e:
        raise IoError(f"failed to read trace: {e}") from e
    if head is None or len(head) < 4 or head != MAGIC:
        raise NotATrace("stream does not begin with the KVQT magic")
    rest = _read_exact(source, HEADER_SIZE - 4, "header")
    fields = struct.unpack(_HEADER_FMT, head + rest)
    (_, version, num_layers, num_q_heads, num_kv_heads, head_dim,
     prompt_len, decode_len, rope_theta, layout_raw, seed, flags) = fields
    if version > VERSION:
        raise UnsupportedVersion(f"trace version {version} is newer than supported ({VERSION})")
    try:
        layout = RopeLayout(layout_raw)
    except ValueError as e:
        raise InvalidTrace(f"unknown rope layout code {layout_raw}") from e
    header = TraceHeader(
        num_layers=num_layers,
        num_q_heads=num_q_heads,
        num_kv_heads=num_kv_heads,
        head_dim=head_dim,
        prompt_len=prompt_len,
        decode_len=decode_len,
        rope_theta=rope_theta,
        rope_layout=layout,
        seed=seed,
        flags=flags,
        version=version,
    )
    header.validate()

    def read_f32(shape, what):
        n = int(np.prod(shape)) * 4
        data = _read_exact(source, n, what)
        return np.frombuffer(data, dtype="<f4").reshape(shape).copy()

    prompt_keys, prompt_queries, decode_queries = [], [], []
    for l in range(num_layers):
        prompt_keys.append(read_f32((num_kv_heads, prompt_len, head_dim), f"layer {l} keys"))
        prompt_queries.append(read_f32((num_q_heads, prompt_len, head_dim), f"layer {l} queries"))
        decode_queries.append(read_f32((num_q_heads, decode_len, head_dim), f"layer {l} decode queries"))

    def read_u32(count, what):
        data = _read_exact(source, count * 4, what)
        return np.frombuffer(data, dtype="<u4").copy()

    prompt_positions = read_u32(prompt_len, "prompt positions")
    decode_positions = read_u32(decode_len, "decode positions")
    token_ids = read_u32(prompt_len, "token ids")
    trailing = source.read(1)
    if trailing:
        raise CorruptTrace("trailing bytes after trace payload")
    trace = AttentionTrace(
        header=header,
        prompt_keys=prompt_keys,
        prompt_queries=prompt_queries,
        decode_queries=decode_queries,
        prompt_positions=prompt_positions,
        decode_positions=decode_positions,
        token_ids=token_ids,
    )
    trace.validate()
    return trace


def read_trace_file(path) -> AttentionTrace:
    try:
        f = open(path, "rb")
    except OSError as e:
        raise IoError(f"failed to open {path}: {e}") from e
    with f:
        return read_trace(f)


def read_trace_bytes(data: bytes) -> AttentionTrace:
    return read_trace(io.BytesIO(data))


def trace_to_bytes(trace: AttentionTrace) -> bytes:
    sink = io.BytesIO()
    write_trace(trace, sink)
    return sink.getvalue()


# Synthetic generation constants. The shared direction gives queries the
# strong common component real transformer queries exhibit, so content drawn
# from different prompt locations still correlates; the walk scale keeps
# decode queries close to the late-prompt distribution.
_EMBED_NOISE = 0.6
_DECODE_WALK = 0.25
_SYNTH_VOCAB = 32000


def generate_synthetic_trace(
    num_layers: int,
    num_q_heads: int,
    num_kv_heads: int,
    head_dim: int,
    prompt_len: int,
    decode_len: int,
    seed: int,
    rope_theta: float = 10000.0,
) -> AttentionTrace:
    """Deterministic synthetic trace: a pure function of shape and seed.

    Token embeddings are a shared unit direction plus seeded Gaussian noise;
    per-layer seeded projections map them to per-head queries and keys.
    Decode embeddings continue from the last prompt embedding by a small
    Gaussian walk, so decode queries resemble late-prompt queries without
    duplicating them.
    """
    header = TraceHeader(
        num_layers=num_layers,
        num_q_heads=num_q_heads,
        num_kv_heads=num_kv_heads,
        head_dim=head_dim,
        prompt_len=prompt_len,
        decode_len=decode_len,
        rope_theta=rope_theta,
        rope_layout=RopeLayout.INTERLEAVED,
        seed=seed,
    )
    header.validate()
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    d_model = 4 * head_dim

    mean_dir = rng.normal(size=d_model)
    mean_dir /= np.linalg.norm(mean_dir)
    noise = rng.normal(size=(prompt_len, d_model)) / np.sqrt(d_model)
    prompt_emb = mean_dir[None, :] + _EMBED_NOISE * noise

    decode_emb = np.empty((decode_len, d_model))
    prev = prompt_emb[-1]
    for t in range(decode_len):
        prev = prev + _DECODE_WALK * rng.normal(size=d_model) / np.sqrt(d_model)
        decode_emb[t] = prev

    # scale so per-head logits q.k/sqrt(d) land in a well-separated range
    gain = np.sqrt(np.sqrt(head_dim)) / np.sqrt(d_model)
    prompt_keys, prompt_queries, decode_queries = [], [], []
    for _ in range(num_layers):
        wq = gain * rng.normal(size=(num_q_heads, d_model, head_dim))
        wk = gain * rng.normal(size=(num_kv_heads, d_model, head_dim))
        prompt_keys.append(np.einsum("td,hdo->hto", prompt_emb, wk).astype(np.float32))
        prompt_queries.append(np.einsum("td,hdo->hto", prompt_emb, wq).astype(np.float32))
        decode_queries.append(np.einsum("td,hdo->hto", decode_emb, wq).astype(np.float32))

    trace = AttentionTrace(
        header=header,
        prompt_keys=prompt_keys,
        prompt_queries=prompt_queries,
        decode_queries=decode_queries,
        prompt_positions=np.arange(prompt_len, dtype=np.uint32),
        decode_positions=np.arange(prompt_len, prompt_len + decode_len, dtype=np.uint32),
        token_ids=rng.integers(0, _SYNTH_VOCAB, size=prompt_len, dtype=np.uint32),
    )
    trace.validate()
    return trace
