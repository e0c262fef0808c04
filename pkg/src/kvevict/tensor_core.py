"""Dense numeric kernel: softmax, cosine similarity, norms, deterministic top-k.

All public functions accept array-likes, compute in 64-bit floats and raise
typed errors on contract violations. Outputs are fresh arrays; nothing is
mutated in place, so results can be shared across threads.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateVector,
    InvalidConfig,
    InvalidDimension,
    InvalidInput,
    NonFiniteInput,
)

L1 = "l1"
LINF = "linf"


def as_vector(x) -> np.ndarray:
    """Convert to a finite 1-D float64 vector, validating shape and entries."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidDimension(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput("vector contains NaN or infinite entries")
    return v


def as_matrix(x) -> np.ndarray:
    """Convert to a finite 2-D float64 matrix, validating shape and entries."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidDimension(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput("matrix contains NaN or infinite entries")
    return m


def as_index_set(indices) -> np.ndarray:
    """Convert to a sorted, duplicate-free int64 index array with entries >= 0."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise InvalidDimension(f"expected 1-D indices, got shape {idx.shape}")
    if idx.size and idx.min() < 0:
        raise InvalidInput("index sets hold non-negative indices only")
    out = np.unique(idx)  # unique() also sorts ascending
    if out.size != idx.size:
        raise InvalidInput("index set contains duplicates")
    return out


def softmax_stable(scores) -> np.ndarray:
    """Numerically stable softmax of a score vector.

    Subtracts the maximum before exponentiation so large scores do not
    overflow; the result sums to 1 and is invariant under adding a constant
    to every score.
    """
    v = as_vector(scores)
    if v.size == 0:
        raise InvalidDimension("softmax of an empty vector is undefined")
    e = np.exp(v - v.max())
    return e / e.sum()


def cosine_similarity(x, y) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1].

    Identical inputs return exactly 1.0; a zero-norm input is rejected
    because it has no direction.
    """
    vx = as_vector(x)
    vy = as_vector(y)
    if vx.shape != vy.shape:
        raise InvalidDimension(f"dimension mismatch: {vx.shape} vs {vy.shape}")
    nx = float(np.linalg.norm(vx))
    ny = float(np.linalg.norm(vy))
    if nx == 0.0 or ny == 0.0:
        raise DegenerateVector("cosine similarity of a zero vector is undefined")
    if np.array_equal(vx, vy):
        return 1.0
    c = float(np.dot(vx / nx, vy / ny))
    return min(1.0, max(-1.0, c))


def top_k_indices(scores, k: int) -> np.ndarray:
    """Indices of the k largest scores, ascending, ties broken toward lower index.

    Asking for more entries than exist returns every index. The stable sort
    makes the result deterministic for any tie pattern.
    """
    v = as_vector(scores)
    if k < 0:
        raise InvalidConfig(f"k must be >= 0, got {k}")
    kk = min(int(k), v.size)
    # stable argsort of the negated scores keeps equal scores in index order
    order = np.argsort(-v, kind="stable")[:kk]
    return np.sort(order).astype(np.int64)


def vector_distance(x, y, norm: str = L1) -> float:
    """L1 or Linf distance between two vectors of equal dimension."""
    vx = as_vector(x)
    vy = as_vector(y)
    if vx.shape != vy.shape:
        raise InvalidDimension(f"dimension mismatch: {vx.shape} vs {vy.shape}")
    d = np.abs(vx - vy)
    if norm == L1:
        return float(d.sum())
    if norm == LINF:
        return float(d.max()) if d.size else 0.0
    raise InvalidConfig(f"unknown norm {norm!r}, expected {L1!r} or {LINF!r}")
