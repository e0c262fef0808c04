"""Stand-alone writer for the .kvqt attention-trace format.

Implements the normative byte layout directly so this package shares no code
with the eviction toolkit; the file on disk is the entire contract.

    magic  b"KVQT"
    u16    version (1)
    u32    num_layers, num_q_heads, num_kv_heads, head_dim,
           prompt_len, decode_len
    f64    rope_theta
    u8     rope_layout origin (0 interleaved, 1 half-split)
    u64    seed (0 for captured traces)
    u32    flags
    per layer: f32 prompt keys (kvh, L, d), prompt queries (qh, L, d),
               decode queries (qh, N, d)
    u32    prompt positions, decode positions, prompt token ids

All multi-byte values little-endian; key/query rows are stored in the
interleaved rotation layout regardless of the origin convention recorded in
the header.
"""

import os
import struct
import tempfile

import numpy as np

from .errors import ExportFailure, InvalidRequest

MAGIC = b"KVQT"
VERSION = 1
_HEADER_FMT = "<4sH6IdBQI"

ROPE_LAYOUT_INTERLEAVED = 0
ROPE_LAYOUT_HALF_SPLIT = 1


def _as_f32(name, arr, shape):
    arr = np.asarray(arr)
    if arr.shape != shape:
        raise InvalidRequest(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidRequest(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr, dtype="<f4")


def _as_u32(name, arr, length):
    arr = np.asarray(arr)
    if arr.shape != (length,):
        raise InvalidRequest(f"{name} has shape {arr.shape}, expected ({length},)")
    if arr.size and (np.any(arr < 0) or np.any(arr > 0xFFFFFFFF)):
        raise InvalidRequest(f"{name} values do not fit in u32")
    return np.ascontiguousarray(arr, dtype="<u4")


def write_kvqt(
    path,
    *,
    prompt_keys,
    prompt_queries,
    decode_queries,
    prompt_positions,
    decode_positions,
    token_ids,
    rope_theta: float,
    rope_layout_origin: int = ROPE_LAYOUT_INTERLEAVED,
    seed: int = 0,
    flags: int = 0,
) -> int:
    """Write one trace; atomic (temp file + rename), returns bytes written."""
    layers = len(prompt_keys)
    if not (layers == len(prompt_queries) == len(decode_queries)) or layers < 1:
        raise InvalidRequest("per-layer array lists are empty or mismatched")
    kvh, prompt_len, head_dim = np.asarray(prompt_keys[0]).shape
    qh = np.asarray(prompt_queries[0]).shape[0]
    decode_len = np.asarray(decode_queries[0]).shape[1]
    if head_dim % 2 != 0 or head_dim < 2:
        raise InvalidRequest(f"head_dim must be even and >= 2, got {head_dim}")
    if qh % kvh != 0:
        raise InvalidRequest(f"{qh} query heads not divisible by {kvh} kv heads")
    if rope_layout_origin not in (ROPE_LAYOUT_INTERLEAVED, ROPE_LAYOUT_HALF_SPLIT):
        raise InvalidRequest(f"unknown rope layout origin {rope_layout_origin}")
    if not float(rope_theta) > 1.0:
        raise InvalidRequest(f"rope_theta must be > 1, got {rope_theta}")

    positions = _as_u32("prompt_positions", prompt_positions, prompt_len)
    if prompt_len > 1 and np.any(np.diff(positions.astype(np.int64)) <= 0):
        raise InvalidRequest("prompt positions must be strictly increasing")

    buf = bytearray()
    buf += struct.pack(
        _HEADER_FMT, MAGIC, VERSION, layers, qh, kvh, head_dim,
        prompt_len, decode_len, float(rope_theta), int(rope_layout_origin),
        int(seed), int(flags),
    )
    for l in range(layers):
        buf += _as_f32(f"layer {l} keys", prompt_keys[l], (kvh, prompt_len, head_dim)).tobytes()
        buf += _as_f32(f"layer {l} queries", prompt_queries[l], (qh, prompt_len, head_dim)).tobytes()
        buf += _as_f32(f"layer {l} decode queries", decode_queries[l], (qh, decode_len, head_dim)).tobytes()
    buf += positions.tobytes()
    buf += _as_u32("decode_positions", decode_positions, decode_len).tobytes()
    buf += _as_u32("token_ids", token_ids, prompt_len).tobytes()

    out_dir = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=out_dir, suffix=".kvqt.tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(bytes(buf))
        os.replace(tmp, path)
    except OSError as e:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise ExportFailure(f"failed to write {path}: {e}") from e
    return len(buf)
