import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from kvevict import (
    DegenerateVector,
    InvalidConfig,
    InvalidDimension,
    NonFiniteInput,
    cosine_similarity,
    softmax_stable,
    top_k_indices,
    vector_distance,
)
from kvevict.tensor_core import L1, LINF

# high-precision oracle values, computed with mpmath at 60 dps
SOFTMAX_LARGE = [0.4223187982515182, 0.4223187982515182, 0.15536240349696362]
SOFTMAX_MIXED = [0.8214090194651259, 0.11116562230242112, 0.06742535823245292]

finite_vecs = hnp.arrays(
    np.float64, st.integers(1, 32),
    elements=st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False),
)


class TestSoftmax:
    def test_two_equal_entries(self):
        out = softmax_stable([0.0, 0.0])
        assert out.tolist() == [0.5, 0.5]

    def test_large_magnitudes_do_not_overflow(self):
        out = softmax_stable([1000.0, 1000.0, 999.0])
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, SOFTMAX_LARGE, rtol=1e-12, atol=0)

    def test_mixed_values_against_oracle(self):
        out = softmax_stable([3.0, 1.0, 0.5])
        np.testing.assert_allclose(out, SOFTMAX_MIXED, rtol=1e-12, atol=0)

    def test_one_third_two_thirds(self):
        out = softmax_stable([0.0, np.log(2.0)])
        np.testing.assert_allclose(out, [1 / 3, 2 / 3], atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(InvalidDimension):
            softmax_stable([])

    def test_nan_rejected(self):
        with pytest.raises(NonFiniteInput):
            softmax_stable([1.0, float("nan")])

    def test_inf_rejected(self):
        with pytest.raises(NonFiniteInput):
            softmax_stable([1.0, float("inf")])

    @given(finite_vecs)
    def test_sums_to_one(self, v):
        out = softmax_stable(v)
        assert abs(out.sum() - 1.0) <= 1e-12
        assert np.all(out >= 0.0)

    @given(finite_vecs, st.floats(-1e4, 1e4, allow_nan=False))
    def test_shift_invariance(self, v, c):
        a = softmax_stable(v)
        b = softmax_stable(v + c)
        np.testing.assert_allclose(a, b, atol=1e-12)

    @given(finite_vecs)
    def test_monotone_in_logits(self, v):
        out = softmax_stable(v)
        order = np.argsort(v, kind="stable")
        # larger logits never get smaller probabilities
        assert np.all(np.diff(out[order]) >= -1e-16)


class TestCosine:
    def test_identical_is_exactly_one(self):
        x = np.array([0.3, -1.7, 2.2])
        assert cosine_similarity(x, x) == 1.0

    def test_collinear(self):
        assert cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_frozen_value(self):
        assert cosine_similarity([3.0, 4.0], [4.0, 3.0]) == pytest.approx(0.96, abs=1e-15)

    def test_opposite(self):
        assert cosine_similarity([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0, abs=1e-15)

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateVector):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InvalidDimension):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(finite_vecs, st.data())
    def test_bounded(self, x, data):
        y = data.draw(hnp.arrays(
            np.float64, x.shape[0],
            elements=st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False),
        ))
        if np.linalg.norm(x) == 0 or np.linalg.norm(y) == 0:
            return
        s = cosine_similarity(x, y)
        assert -1.0 <= s <= 1.0

    @given(finite_vecs, st.floats(1e-3, 1e3))
    def test_scale_invariance(self, x, a):
        if np.linalg.norm(x) == 0 or np.linalg.norm(a * x) == 0:
            return
        assert cosine_similarity(x, a * x) == pytest.approx(1.0, abs=1e-9)


class TestTopK:
    def test_ties_resolve_to_lower_index(self):
        assert top_k_indices([1.0, 3.0, 3.0, 2.0], 2).tolist() == [1, 2]

    def test_all_equal_takes_prefix(self):
        assert top_k_indices([5.0, 5.0, 5.0, 5.0], 2).tolist() == [0, 1]

    def test_k_zero(self):
        assert top_k_indices([1.0, 2.0], 0).tolist() == []

    def test_k_exceeds_length(self):
        assert top_k_indices([1.0, 2.0], 10).tolist() == [0, 1]

    def test_negative_k_rejected(self):
        with pytest.raises(InvalidConfig):
            top_k_indices([1.0], -1)

    def test_output_sorted(self):
        assert top_k_indices([0.0, 9.0, 1.0, 8.0], 2).tolist() == [1, 3]

    @given(finite_vecs, st.integers(0, 40))
    def test_selection_dominates_rest(self, v, k):
        sel = top_k_indices(v, k).tolist()
        assert len(sel) == min(k, v.shape[0])
        assert sel == sorted(sel)
        rest = sorted(set(range(v.shape[0])) - set(sel))
        if sel and rest:
            assert min(v[sel]) >= max(v[rest])

    @given(finite_vecs, st.integers(1, 40))
    def test_pure_no_mutation(self, v, k):
        before = v.copy()
        top_k_indices(v, k)
        assert np.array_equal(v, before)


class TestDistances:
    def test_l1_example(self):
        assert vector_distance([1.0, 2.0], [0.0, 0.0], L1) == 3.0

    def test_linf_example(self):
        assert vector_distance([1.0, 2.0], [0.0, 0.0], LINF) == 2.0

    def test_unknown_metric_rejected(self):
        with pytest.raises(InvalidConfig):
            vector_distance([1.0], [0.0], "l7")

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InvalidDimension):
            vector_distance([1.0], [0.0, 0.0], L1)

    @given(finite_vecs, st.data())
    @settings(max_examples=50)
    def test_norm_chain(self, x, data):
        y = data.draw(hnp.arrays(
            np.float64, x.shape[0],
            elements=st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False),
        ))
        d1 = vector_distance(x, y, L1)
        dinf = vector_distance(x, y, LINF)
        n = x.shape[0]
        assert dinf <= d1 + 1e-9
        assert d1 <= n * dinf + 1e-9
