import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kvevict import InvalidConfig, InvalidDimension, InvalidInput, RopeConfig, apply_rope, rotate_rows

import reference

CFG8 = RopeConfig(head_dim=8)

unit_vecs8 = hnp.arrays(
    np.float64, 8, elements=st.floats(-10, 10, allow_nan=False, allow_infinity=False)
).filter(lambda v: np.linalg.norm(v) > 1e-6)

positions = st.integers(0, 1 << 20)


class TestConfig:
    def test_odd_head_dim_rejected(self):
        with pytest.raises(InvalidConfig):
            RopeConfig(head_dim=7)

    def test_nonpositive_head_dim_rejected(self):
        with pytest.raises(InvalidConfig):
            RopeConfig(head_dim=0)

    def test_theta_at_most_one_rejected(self):
        with pytest.raises(InvalidConfig):
            RopeConfig(head_dim=8, theta_base=1.0)

    def test_nonpositive_scaling_rejected(self):
        with pytest.raises(InvalidConfig):
            RopeConfig(head_dim=8, scaling=0.0)


class TestRotation:
    def test_position_zero_is_identity(self):
        x = np.arange(8, dtype=np.float64)
        out = apply_rope(x, 0, CFG8)
        assert np.array_equal(out, x)

    def test_two_dims_position_one(self):
        cfg = RopeConfig(head_dim=2)
        out = apply_rope([1.0, 0.0], 1, cfg)
        np.testing.assert_allclose(out, [math.cos(1.0), math.sin(1.0)], atol=1e-15)

    def test_pairs_rotate_independently(self):
        cfg = RopeConfig(head_dim=4)
        out = apply_rope([1.0, 0.0, 1.0, 0.0], 2, cfg)
        # pair 0 turns at frequency 1, pair 1 at theta^(-1/2)
        w1 = 2.0
        w2 = 2.0 * 10000.0 ** (-0.5)
        np.testing.assert_allclose(
            out, [math.cos(w1), math.sin(w1), math.cos(w2), math.sin(w2)], atol=1e-15
        )

    def test_matches_reference_rows(self, rng):
        xs = rng.normal(size=(5, 8))
        pos = np.array([0, 1, 7, 100, 4096])
        out = rotate_rows(xs, pos, CFG8)
        for i in range(5):
            np.testing.assert_allclose(
                out[i], reference.rotate(xs[i].tolist(), int(pos[i])), atol=1e-12
            )

    def test_negative_position_rejected(self):
        with pytest.raises(InvalidInput):
            apply_rope(np.ones(8), -1, CFG8)

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InvalidDimension):
            apply_rope(np.ones(6), 0, CFG8)

    @given(unit_vecs8, positions)
    def test_isometry(self, x, p):
        out = apply_rope(x, p, CFG8)
        assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(x), rel=1e-12)

    @given(unit_vecs8, unit_vecs8, positions)
    @settings(max_examples=60)
    def test_equal_position_preserves_inner_product(self, x, y, p):
        rx = apply_rope(x, p, CFG8)
        ry = apply_rope(y, p, CFG8)
        assert float(rx @ ry) == pytest.approx(float(x @ y), rel=1e-9, abs=1e-9)

    @given(unit_vecs8, unit_vecs8, st.integers(0, 4096), st.integers(0, 4096), st.integers(0, 4096))
    @settings(max_examples=60)
    def test_relative_position_property(self, x, y, p, q, s):
        a = float(apply_rope(x, p, CFG8) @ apply_rope(y, q, CFG8))
        b = float(apply_rope(x, p + s, CFG8) @ apply_rope(y, q + s, CFG8))
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)

    def test_scaling_compresses_angles(self):
        half = RopeConfig(head_dim=2, scaling=0.5)
        full = RopeConfig(head_dim=2)
        a = apply_rope([1.0, 0.0], 10, half)
        b = apply_rope([1.0, 0.0], 5, full)
        np.testing.assert_allclose(a, b, atol=1e-12)
