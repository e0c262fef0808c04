"""Rotation layout conversion and the fidelity oracle's rotation.

Transformer runtimes disagree on how a head vector is paired for rotary
embedding. The trace format stores the interleaved convention, where the
pair (x[2i], x[2i+1]) rotates by angle pos * theta^(-2i/d). The half-split
convention used by common Llama-family runtimes rotates (x[i], x[i + d/2])
by the same angle, so converting between them is a pure permutation and
commutes with the rotation itself.
"""

import numpy as np

from .errors import InvalidRequest


def _check_even(x):
    if x.shape[-1] % 2 != 0:
        raise InvalidRequest(f"head dimension must be even, got {x.shape[-1]}")


def to_interleaved(x: np.ndarray) -> np.ndarray:
    """Half-split order -> interleaved order: [x_0, x_{d/2}, x_1, x_{d/2+1}, ...]."""
    x = np.asarray(x)
    _check_even(x)
    half = x.shape[-1] // 2
    out = np.empty_like(x)
    out[..., 0::2] = x[..., :half]
    out[..., 1::2] = x[..., half:]
    return out


def from_interleaved(x: np.ndarray) -> np.ndarray:
    """Inverse of ``to_interleaved``."""
    x = np.asarray(x)
    _check_even(x)
    half = x.shape[-1] // 2
    out = np.empty_like(x)
    out[..., :half] = x[..., 0::2]
    out[..., half:] = x[..., 1::2]
    return out


def rotate_interleaved(rows: np.ndarray, positions, theta: float) -> np.ndarray:
    """Rotary embedding in the interleaved convention, float64.

    Used only by the capture-fidelity oracle: re-applying this rotation to the
    exported pre-rotation keys must reproduce the runtime's post-rotation keys.
    """
    rows = np.asarray(rows, dtype=np.float64)
    _check_even(rows)
    d = rows.shape[-1]
    freqs = float(theta) ** (-np.arange(d // 2) * 2.0 / d)
    angles = np.asarray(positions, dtype=np.float64)[:, None] * freqs[None, :]
    c, s = np.cos(angles), np.sin(angles)
    even, odd = rows[..., 0::2], rows[..., 1::2]
    out = np.empty_like(rows)
    out[..., 0::2] = even * c - odd * s
    out[..., 1::2] = even * s + odd * c
    return out
