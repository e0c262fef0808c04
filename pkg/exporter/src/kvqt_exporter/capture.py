"""Forward-hook capture of pre-rotation query/key projections.

Hooks sit on each attention block's q/k projection modules, whose outputs are
the head vectors before rotary embedding is applied. The session has two
modes: prefill stores the full (seq, heads*dim) output, decode stores only
the final row of each pass (decode passes feed one token at a time).
"""

import numpy as np

from .errors import IncompatibleModel


def decoder_layers(model):
    """The list of transformer blocks, wherever the runtime nests it."""
    for holder in (model, getattr(model, "model", None)):
        layers = getattr(holder, "layers", None)
        if layers is not None and len(layers) > 0:
            return list(layers)
    raise IncompatibleModel("model exposes no decoder layer list to hook")


def model_geometry(config):
    """(num_q_heads, num_kv_heads, head_dim, rope_theta) from a model config."""
    qh = getattr(config, "num_attention_heads", None)
    if not qh:
        raise IncompatibleModel("config does not declare num_attention_heads")
    kvh = getattr(config, "num_key_value_heads", None) or qh
    head_dim = getattr(config, "head_dim", None)
    if not head_dim:
        hidden = getattr(config, "hidden_size", None)
        if not hidden:
            raise IncompatibleModel("config declares neither head_dim nor hidden_size")
        head_dim = hidden // qh
    theta = getattr(config, "rope_theta", None)
    if theta is None:
        theta = (getattr(config, "rope_parameters", None) or {}).get("rope_theta")
    if theta is None:
        theta = 10000.0
    return int(qh), int(kvh), int(head_dim), float(theta)


class CaptureSession:
    """Attaches q/k hooks to every decoder layer; collect, then ``close``."""

    def __init__(self, model):
        self.layers = decoder_layers(model)
        self.mode = "prefill"
        self.prefill_q = [None] * len(self.layers)
        self.prefill_k = [None] * len(self.layers)
        self.decode_q = [[] for _ in self.layers]
        self._handles = []
        try:
            for i, layer in enumerate(self.layers):
                attn = getattr(layer, "self_attn", None)
                q_proj = getattr(attn, "q_proj", None)
                k_proj = getattr(attn, "k_proj", None)
                if q_proj is None or k_proj is None:
                    raise AttributeError("q_proj/k_proj missing")
                self._handles.append(q_proj.register_forward_hook(self._hook(i, "q")))
                self._handles.append(k_proj.register_forward_hook(self._hook(i, "k")))
        except AttributeError as e:
            self.close()
            raise IncompatibleModel(
                f"cannot hook attention projections on layer {len(self._handles) // 2}: {e}"
            ) from e

    def _hook(self, index, which):
        def hook(module, args, output):
            rows = output.detach()[0].to("cpu").numpy()  # (seq, heads*dim)
            if self.mode == "prefill":
                if which == "q":
                    self.prefill_q[index] = rows.copy()
                else:
                    self.prefill_k[index] = rows.copy()
            elif self.mode == "decode" and which == "q":
                self.decode_q[index].append(rows[-1].copy())
        return hook

    def close(self):
        for h in self._handles:
            h.remove()
        self._handles = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def split_heads(rows: np.ndarray, num_heads: int, head_dim: int) -> np.ndarray:
    """(seq, heads*dim) -> (heads, seq, dim)."""
    seq = rows.shape[0]
    if rows.shape[1] != num_heads * head_dim:
        raise IncompatibleModel(
            f"projection width {rows.shape[1]} != {num_heads} heads x {head_dim} dims"
        )
    return rows.reshape(seq, num_heads, head_dim).transpose(1, 0, 2)
