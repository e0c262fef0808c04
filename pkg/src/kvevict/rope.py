"""Rotary position embedding on interleaved dimension pairs.

Dimension pair (2i, 2i+1) of a head vector is rotated by the angle
``position * scaling / theta_base ** (2 * i / head_dim)``. The rotation is
orthogonal, so norms are preserved, vectors rotated at the same position keep
their cosine similarity, and the inner product of a rotated query/key pair
depends only on the relative position offset.

Vectors captured from runtimes that rotate half-split pairs (i, i + d/2) must
be permuted into the interleaved layout before they enter this module; the
trace header records which convention the producer used.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidConfig, InvalidDimension, InvalidInput
from .tensor_core import as_vector


@dataclass(frozen=True)
class RopeConfig:
    """Rotation parameters for one model family."""

    head_dim: int
    theta_base: float = 10000.0
    scaling: float = 1.0

    def __post_init__(self) -> None:
        if self.head_dim <= 0 or self.head_dim % 2 != 0:
            raise InvalidConfig(f"head_dim must be a positive even integer, got {self.head_dim}")
        if not self.theta_base > 1.0:
            raise InvalidConfig(f"theta_base must be > 1, got {self.theta_base}")
        if not self.scaling > 0.0:
            raise InvalidConfig(f"scaling must be > 0, got {self.scaling}")


@lru_cache(maxsize=128)
def _pair_frequencies(head_dim: int, theta_base: float) -> np.ndarray:
    i = np.arange(head_dim // 2, dtype=np.float64)
    freqs = theta_base ** (-2.0 * i / head_dim)
    freqs.setflags(write=False)
    return freqs


def pair_frequencies(cfg: RopeConfig) -> np.ndarray:
    """Per-pair angular frequencies, highest first (read-only array)."""
    return _pair_frequencies(cfg.head_dim, cfg.theta_base)


def rotate_rows(rows, positions, cfg: RopeConfig) -> np.ndarray:
    """Rotate each row of a (n, head_dim) matrix at its own position id."""
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.head_dim:
        raise InvalidDimension(f"expected (n, {cfg.head_dim}) rows, got shape {x.shape}")
    pos = np.asarray(positions, dtype=np.int64)
    if pos.ndim != 1 or pos.shape[0] != x.shape[0]:
        raise InvalidDimension("one position id per row is required")
    if pos.size and pos.min() < 0:
        raise InvalidInput("position ids must be >= 0")
    angles = (pos[:, None].astype(np.float64) * cfg.scaling) * pair_frequencies(cfg)[None, :]
    cos = np.cos(angles)
    sin = np.sin(angles)
    even = x[:, 0::2]
    odd = x[:, 1::2]
    out = np.empty_like(x)
    out[:, 0::2] = even * cos - odd * sin
    out[:, 1::2] = even * sin + odd * cos
    return out


def apply_rope(x, position: int, cfg: RopeConfig) -> np.ndarray:
    """Rotate a single head vector at the given position id."""
    v = as_vector(x)
    if v.shape[0] != cfg.head_dim:
        raise InvalidDimension(f"expected dimension {cfg.head_dim}, got {v.shape[0]}")
    return rotate_rows(v[None, :], np.asarray([position]), cfg)[0]
