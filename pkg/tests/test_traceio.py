import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvevict import (
    AttentionTrace,
    CorruptTrace,
    HEADER_SIZE,
    InvalidTrace,
    IoError,
    NotATrace,
    RopeLayout,
    TraceHeader,
    UnsupportedVersion,
    generate_synthetic_trace,
    read_trace_bytes,
    read_trace_file,
    trace_byte_size,
    trace_to_bytes,
    write_trace_file,
)


def _random_trace(rng, num_layers=1, num_q_heads=2, num_kv_heads=1,
                  head_dim=4, prompt_len=5, decode_len=3):
    header = TraceHeader(num_layers=num_layers, num_q_heads=num_q_heads,
                         num_kv_heads=num_kv_heads, head_dim=head_dim,
                         prompt_len=prompt_len, decode_len=decode_len)
    f32 = lambda shape: rng.normal(size=shape).astype(np.float32)
    return AttentionTrace(
        header=header,
        prompt_keys=[f32((num_kv_heads, prompt_len, head_dim)) for _ in range(num_layers)],
        prompt_queries=[f32((num_q_heads, prompt_len, head_dim)) for _ in range(num_layers)],
        decode_queries=[f32((num_q_heads, decode_len, head_dim)) for _ in range(num_layers)],
        prompt_positions=np.arange(prompt_len, dtype=np.uint32),
        decode_positions=np.arange(prompt_len, prompt_len + decode_len, dtype=np.uint32),
        token_ids=rng.integers(0, 1000, size=prompt_len, dtype=np.uint32),
    )


class TestRoundTrip:
    def test_bytes_roundtrip_is_exact(self, rng):
        trace = _random_trace(rng)
        data = trace_to_bytes(trace)
        back = read_trace_bytes(data)
        assert back.header == trace.header
        for l in range(trace.header.num_layers):
            assert np.array_equal(back.prompt_keys[l], trace.prompt_keys[l])
            assert np.array_equal(back.prompt_queries[l], trace.prompt_queries[l])
            assert np.array_equal(back.decode_queries[l], trace.decode_queries[l])
        assert np.array_equal(back.prompt_positions, trace.prompt_positions)
        assert np.array_equal(back.decode_positions, trace.decode_positions)
        assert np.array_equal(back.token_ids, trace.token_ids)
        assert trace_to_bytes(back) == data

    def test_file_roundtrip(self, rng, tmp_path):
        trace = _random_trace(rng, num_layers=2)
        path = tmp_path / "t.kvqt"
        n = write_trace_file(trace, path)
        assert path.stat().st_size == n == trace_byte_size(trace.header)
        back = read_trace_file(path)
        assert trace_to_bytes(back) == trace_to_bytes(trace)

    def test_minimal_trace_is_75_bytes(self):
        header = TraceHeader(num_layers=1, num_q_heads=1, num_kv_heads=1,
                             head_dim=2, prompt_len=1, decode_len=0)
        assert HEADER_SIZE == 51
        # 51 header + 2 f32 rows of dim 2 (16) + 2 u32 tail entries (8)
        assert trace_byte_size(header) == 75
        trace = AttentionTrace(
            header=header,
            prompt_keys=[np.ones((1, 1, 2), dtype=np.float32)],
            prompt_queries=[np.ones((1, 1, 2), dtype=np.float32)],
            decode_queries=[np.zeros((1, 0, 2), dtype=np.float32)],
            prompt_positions=np.zeros(1, dtype=np.uint32),
            decode_positions=np.zeros(0, dtype=np.uint32),
            token_ids=np.zeros(1, dtype=np.uint32),
        )
        assert len(trace_to_bytes(trace)) == 75

    @given(st.integers(0, 2**31 - 1), st.integers(1, 3), st.integers(1, 2),
           st.integers(1, 6), st.integers(0, 4))
    @settings(max_examples=40, deadline=None)
    def test_roundtrip_property(self, seed, num_layers, num_kv_heads, prompt_len, decode_len):
        rng = np.random.default_rng(seed)
        trace = _random_trace(
            rng, num_layers=num_layers, num_q_heads=2 * num_kv_heads,
            num_kv_heads=num_kv_heads, prompt_len=prompt_len, decode_len=decode_len,
        )
        data = trace_to_bytes(trace)
        assert len(data) == trace_byte_size(trace.header)
        assert trace_to_bytes(read_trace_bytes(data)) == data


class TestErrorTaxonomy:
    def _valid_bytes(self, rng):
        return trace_to_bytes(_random_trace(rng))

    def test_wrong_magic(self, rng):
        data = b"XXXX" + self._valid_bytes(rng)[4:]
        with pytest.raises(NotATrace):
            read_trace_bytes(data)

    def test_empty_stream(self):
        with pytest.raises(NotATrace):
            read_trace_bytes(b"")

    def test_future_version(self, rng):
        data = bytearray(self._valid_bytes(rng))
        data[4:6] = struct.pack("<H", 2)
        with pytest.raises(UnsupportedVersion):
            read_trace_bytes(bytes(data))

    def test_truncated_payload(self, rng):
        data = self._valid_bytes(rng)
        with pytest.raises(CorruptTrace):
            read_trace_bytes(data[:-4])

    def test_truncated_header(self, rng):
        data = self._valid_bytes(rng)
        with pytest.raises(CorruptTrace):
            read_trace_bytes(data[:20])

    def test_trailing_bytes(self, rng):
        data = self._valid_bytes(rng) + b"\x00"
        with pytest.raises(CorruptTrace):
            read_trace_bytes(data)

    def test_unknown_rope_layout(self, rng):
        data = bytearray(self._valid_bytes(rng))
        data[38] = 7
        with pytest.raises(InvalidTrace):
            read_trace_bytes(bytes(data))

    def test_inconsistent_head_counts(self, rng):
        data = bytearray(self._valid_bytes(rng))
        data[14:18] = struct.pack("<I", 3)  # kv heads no longer divide q heads
        with pytest.raises(InvalidTrace):
            read_trace_bytes(bytes(data))

    def test_non_finite_payload(self, rng):
        data = bytearray(self._valid_bytes(rng))
        data[HEADER_SIZE : HEADER_SIZE + 4] = struct.pack("<f", float("nan"))
        with pytest.raises(InvalidTrace):
            read_trace_bytes(bytes(data))

    def test_write_rejects_non_finite(self, rng):
        trace = _random_trace(rng)
        trace.prompt_keys[0][0, 0, 0] = np.inf
        with pytest.raises(InvalidTrace):
            trace_to_bytes(trace)

    def test_write_rejects_wrong_dtype(self, rng):
        trace = _random_trace(rng)
        trace.prompt_keys[0] = trace.prompt_keys[0].astype(np.float64)
        with pytest.raises(InvalidTrace):
            trace_to_bytes(trace)

    def test_write_rejects_unsorted_positions(self, rng):
        trace = _random_trace(rng)
        trace.prompt_positions = trace.prompt_positions[::-1].copy()
        with pytest.raises(InvalidTrace):
            trace_to_bytes(trace)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_trace_file(tmp_path / "absent.kvqt")

    def test_unwritable_path(self, rng, tmp_path):
        with pytest.raises(IoError):
            write_trace_file(_random_trace(rng), tmp_path / "no" / "dir" / "t.kvqt")


class TestHeaderValidation:
    def test_odd_head_dim_rejected(self):
        with pytest.raises(InvalidTrace):
            TraceHeader(1, 1, 1, 3, 4, 0).validate()

    def test_indivisible_heads_rejected(self):
        with pytest.raises(InvalidTrace):
            TraceHeader(1, 4, 3, 4, 4, 0).validate()

    def test_zero_prompt_rejected(self):
        with pytest.raises(InvalidTrace):
            TraceHeader(1, 1, 1, 4, 0, 0).validate()

    def test_theta_one_rejected(self):
        with pytest.raises(InvalidTrace):
            TraceHeader(1, 1, 1, 4, 4, 0, rope_theta=1.0).validate()

    def test_group_size(self):
        assert TraceHeader(1, 8, 2, 4, 4, 0).group_size == 4


class TestSyntheticGenerator:
    ARGS = dict(num_layers=2, num_q_heads=4, num_kv_heads=2, head_dim=8,
                prompt_len=32, decode_len=4)

    def test_same_seed_is_byte_identical(self):
        a = generate_synthetic_trace(seed=9, **self.ARGS)
        b = generate_synthetic_trace(seed=9, **self.ARGS)
        assert trace_to_bytes(a) == trace_to_bytes(b)

    def test_different_seeds_differ(self):
        a = generate_synthetic_trace(seed=9, **self.ARGS)
        b = generate_synthetic_trace(seed=10, **self.ARGS)
        assert trace_to_bytes(a) != trace_to_bytes(b)

    def test_header_matches_request(self):
        t = generate_synthetic_trace(seed=9, **self.ARGS)
        h = t.header
        assert (h.num_layers, h.num_q_heads, h.num_kv_heads) == (2, 4, 2)
        assert (h.head_dim, h.prompt_len, h.decode_len) == (8, 32, 4)
        assert h.rope_layout is RopeLayout.INTERLEAVED
        assert h.seed == 9

    def test_positions_are_canonical(self):
        t = generate_synthetic_trace(seed=0, **self.ARGS)
        assert t.prompt_positions.tolist() == list(range(32))
        assert t.decode_positions.tolist() == list(range(32, 36))

    def test_layer_view_widens_and_groups(self):
        t = generate_synthetic_trace(seed=0, **self.ARGS)
        layer = t.layer(1)
        assert layer.prompt_keys.dtype == np.float64
        assert list(layer.query_heads_for(0)) == [0, 1]
        assert list(layer.query_heads_for(1)) == [2, 3]
        assert layer.group_size == 2
