import numpy as np
import pytest

from kvevict import generate_synthetic_trace


@pytest.fixture(scope="session")
def small_trace():
    """Shared synthetic trace, small enough for brute-force comparisons."""
    return generate_synthetic_trace(
        num_layers=2, num_q_heads=4, num_kv_heads=2, head_dim=16,
        prompt_len=48, decode_len=6, seed=1234,
    )


@pytest.fixture(scope="session")
def prompt_only_trace():
    return generate_synthetic_trace(
        num_layers=1, num_q_heads=2, num_kv_heads=1, head_dim=8,
        prompt_len=24, decode_len=0, seed=77,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(np.random.SeedSequence(20240816))
