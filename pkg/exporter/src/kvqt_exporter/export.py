"""End-to-end trace export from a causal transformer checkpoint.

One prefill pass captures pre-rotation prompt queries and keys per layer;
greedy cached decoding captures the first N decode-step queries. Head vectors
are converted from the runtime's half-split rotation layout to the trace
format's interleaved layout, and a fidelity oracle re-applies the rotation to
the exported keys and compares against the runtime's own post-rotation key
cache, writing the per-layer error to a CSV sidecar next to the trace.
"""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

from .capture import CaptureSession, model_geometry, split_heads
from .errors import ExportFailure, IncompatibleModel, InvalidRequest
from .layout import rotate_interleaved, to_interleaved
from .writer import ROPE_LAYOUT_HALF_SPLIT, write_kvqt

FIDELITY_TOLERANCE = 1e-4  # 32-bit capture vs runtime accumulation differences


@dataclass
class ExportRequest:
    model_id: str
    prompt_text: str
    out_path: str
    decode_steps: int = 32
    max_prompt_tokens: int = 4096
    layers: tuple | None = None  # None exports every layer

    def validate(self) -> None:
        if not self.model_id:
            raise InvalidRequest("model_id is empty")
        if not self.prompt_text:
            raise InvalidRequest("prompt text is empty")
        if self.decode_steps < 0:
            raise InvalidRequest(f"decode_steps must be >= 0, got {self.decode_steps}")
        if self.max_prompt_tokens < 1:
            raise InvalidRequest(
                f"max_prompt_tokens must be >= 1, got {self.max_prompt_tokens}"
            )
        if not self.out_path:
            raise InvalidRequest("output path is empty")


@dataclass
class ExportReport:
    out_path: str
    sidecar_path: str
    num_layers: int
    prompt_len: int
    decode_len: int
    trace_bytes: int
    fidelity: list = field(default_factory=list)  # (layer, max_abs_error) pairs
    tolerance: float = FIDELITY_TOLERANCE

    @property
    def max_fidelity_error(self) -> float:
        return max((e for _, e in self.fidelity), default=0.0)

    @property
    def fidelity_ok(self) -> bool:
        return self.max_fidelity_error <= self.tolerance


def sidecar_path(out_path: str) -> str:
    root, ext = os.path.splitext(out_path)
    base = root if ext == ".kvqt" else out_path
    return base + ".fidelity.csv"


def _load(model_id: str):
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModelForCausalLM.from_pretrained(model_id, dtype=torch.float32)
    except Exception as e:
        raise IncompatibleModel(f"could not load {model_id!r}: {e}") from e
    model.eval()
    return tokenizer, model


def _runtime_post_rope_keys(cache, layer_index: int) -> np.ndarray:
    """Post-rotation keys (kv_heads, seq, dim) from whatever cache API exists."""
    layers = getattr(cache, "layers", None)
    if layers is not None:
        keys = layers[layer_index].keys
    else:
        key_cache = getattr(cache, "key_cache", None)
        keys = key_cache[layer_index] if key_cache is not None else cache[layer_index][0]
    return keys.detach()[0].to("cpu").numpy()


def _resolve_layers(requested, available: int) -> list[int]:
    if requested is None:
        return list(range(available))
    picked = sorted(set(int(i) for i in requested))
    if not picked:
        raise InvalidRequest("layer subset is empty")
    for i in picked:
        if not 0 <= i < available:
            raise InvalidRequest(f"layer {i} out of range for {available}-layer model")
    return picked


def export_trace(req: ExportRequest) -> ExportReport:
    """Run the capture and write the trace plus its fidelity sidecar.

    The trace write is atomic, so an out-of-memory or runtime failure during
    capture (raised as ExportFailure) never leaves a partial .kvqt behind.
    """
    import torch

    req.validate()
    tokenizer, model = _load(req.model_id)
    qh, kvh, head_dim, theta = model_geometry(model.config)

    ids = tokenizer(req.prompt_text, add_special_tokens=False)["input_ids"]
    ids = ids[: req.max_prompt_tokens]
    if not ids:
        raise InvalidRequest("prompt tokenized to zero tokens")
    prompt_len = len(ids)

    with CaptureSession(model) as session:
        try:
            with torch.no_grad():
                tokens = torch.tensor([ids], dtype=torch.long)
                out = model(
                    tokens,
                    position_ids=torch.arange(prompt_len).unsqueeze(0),
                    use_cache=True,
                )
                cache = out.past_key_values
                post_rope = [
                    _runtime_post_rope_keys(cache, i)
                    for i in range(len(session.layers))
                ]
                session.mode = "decode"
                step = out.logits[0, -1].argmax().view(1, 1)
                for t in range(req.decode_steps):
                    out = model(
                        step,
                        position_ids=torch.tensor([[prompt_len + t]]),
                        past_key_values=cache,
                        use_cache=True,
                    )
                    cache = out.past_key_values
                    step = out.logits[0, -1].argmax().view(1, 1)
        except (MemoryError, RuntimeError) as e:
            raise ExportFailure(f"capture failed: {e}") from e
        finally:
            session.mode = "off"

    picked = _resolve_layers(req.layers, len(session.layers))
    prompt_keys, prompt_queries, decode_queries = [], [], []
    fidelity = []
    positions = np.arange(prompt_len, dtype=np.uint32)
    for i in picked:
        k = to_interleaved(split_heads(session.prefill_k[i], kvh, head_dim))
        q = to_interleaved(split_heads(session.prefill_q[i], qh, head_dim))
        if len(session.decode_q[i]) != req.decode_steps:
            raise ExportFailure(
                f"layer {i} captured {len(session.decode_q[i])} decode rows, "
                f"expected {req.decode_steps}"
            )
        if req.decode_steps:
            dq = to_interleaved(
                np.stack(session.decode_q[i]).reshape(req.decode_steps, qh, head_dim)
            ).transpose(1, 0, 2)
        else:
            dq = np.zeros((qh, 0, head_dim), dtype=np.float32)
        prompt_keys.append(np.ascontiguousarray(k, dtype=np.float32))
        prompt_queries.append(np.ascontiguousarray(q, dtype=np.float32))
        decode_queries.append(np.ascontiguousarray(dq, dtype=np.float32))

        runtime = to_interleaved(post_rope[i])
        err = 0.0
        for g in range(kvh):
            re_rot = rotate_interleaved(prompt_keys[-1][g], positions, theta)
            err = max(err, float(np.max(np.abs(re_rot - runtime[g]))))
        fidelity.append((i, err))

    trace_bytes = write_kvqt(
        req.out_path,
        prompt_keys=prompt_keys,
        prompt_queries=prompt_queries,
        decode_queries=decode_queries,
        prompt_positions=positions,
        decode_positions=np.arange(prompt_len, prompt_len + req.decode_steps, dtype=np.uint32),
        token_ids=np.asarray(ids, dtype=np.uint32),
        rope_theta=theta,
        rope_layout_origin=ROPE_LAYOUT_HALF_SPLIT,
        seed=0,
    )

    side = sidecar_path(req.out_path)
    report = ExportReport(
        out_path=req.out_path,
        sidecar_path=side,
        num_layers=len(picked),
        prompt_len=prompt_len,
        decode_len=req.decode_steps,
        trace_bytes=trace_bytes,
        fidelity=fidelity,
    )
    with open(side, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["layer", "max_abs_error", "tolerance", "status"])
        for layer, err in fidelity:
            status = "ok" if err <= FIDELITY_TOLERANCE else "fail"
            w.writerow([layer, f"{err:.9e}", f"{FIDELITY_TOLERANCE:g}", status])
    return report
