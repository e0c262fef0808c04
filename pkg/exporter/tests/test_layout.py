"""Layout permutation and fidelity-rotation unit tests."""

import numpy as np
import pytest

from kvqt_exporter import (
    InvalidRequest,
    from_interleaved,
    rotate_interleaved,
    to_interleaved,
)


def hf_style_rotate(x, positions, theta):
    """Half-split rotation as Llama-family runtimes compute it."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    inv_freq = 1.0 / theta ** (np.arange(0, d, 2) / d)
    ang = np.asarray(positions, dtype=np.float64)[:, None] * inv_freq[None, :]
    cos = np.concatenate([np.cos(ang), np.cos(ang)], axis=-1)
    sin = np.concatenate([np.sin(ang), np.sin(ang)], axis=-1)
    rot_half = np.concatenate([-x[..., d // 2:], x[..., : d // 2]], axis=-1)
    return x * cos + rot_half * sin


class TestPermutation:
    def test_small_example(self):
        row = np.array([[1.0, 2.0, 3.0, 4.0]])
        assert to_interleaved(row).tolist() == [[1.0, 3.0, 2.0, 4.0]]

    def test_roundtrip(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 5, 8))
        np.testing.assert_array_equal(from_interleaved(to_interleaved(x)), x)
        np.testing.assert_array_equal(to_interleaved(from_interleaved(x)), x)

    def test_odd_dimension_rejected(self):
        with pytest.raises(InvalidRequest):
            to_interleaved(np.zeros((2, 3)))


class TestRotation:
    def test_position_zero_is_identity(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 6))
        np.testing.assert_allclose(rotate_interleaved(x, np.zeros(4), 10000.0), x)

    def test_isometry(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(8, 16))
        out = rotate_interleaved(x, np.arange(8) * 37, 10000.0)
        np.testing.assert_allclose(
            np.linalg.norm(out, axis=1), np.linalg.norm(x, axis=1), rtol=1e-12
        )

    def test_commutes_with_layout_permutation(self):
        """Permuting then rotating interleaved == rotating half-split then permuting."""
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10, 32))
        positions = rng.integers(0, 4096, size=10)
        theta = 10000.0
        via_permute_first = rotate_interleaved(to_interleaved(x), positions, theta)
        via_rotate_first = to_interleaved(hf_style_rotate(x, positions, theta))
        np.testing.assert_allclose(via_permute_first, via_rotate_first, atol=1e-12)
