"""Shared fixtures: a tiny random-weight checkpoint saved to disk.

The checkpoint is a genuine Llama-architecture model (GQA, rotary embedding,
half-split layout) with random weights and a byte-level tokenizer, so exports
exercise the same hook points and layout conversion as a pretrained model
without any network access.
"""

import pytest
import torch
from tokenizers import Tokenizer, decoders, models, pre_tokenizers
from transformers import LlamaConfig, LlamaForCausalLM, PreTrainedTokenizerFast

PROMPT_TEXT = (
    "The recall oracle ranks prompt tokens by decode-time attention mass. "
    "A compression policy is judged by how much of that oracle set survives "
    "its budget. Observation windows estimate the ranking from late prompt "
    "queries; pseudo windows go further and borrow the positions the decode "
    "steps will occupy. Position, not content, carries most of the signal: "
    "rotating the same window content to an earlier anchor collapses the "
    "similarity, while swapping content at a fixed anchor barely moves it. "
    "Budgets in the study range from one to twenty-five percent of the "
    "prompt, with recall reported per layer and per grouped key-value head. "
    "Sinks and recency remain surprisingly strong at the smallest budgets. "
) * 4


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt")
    torch.manual_seed(0)
    config = LlamaConfig(
        vocab_size=256, hidden_size=64, intermediate_size=128,
        num_hidden_layers=2, num_attention_heads=4, num_key_value_heads=2,
        head_dim=16, max_position_embeddings=8192, rope_theta=10000.0,
    )
    LlamaForCausalLM(config).save_pretrained(path)

    alphabet = sorted(pre_tokenizers.ByteLevel.alphabet())
    tok = Tokenizer(models.BPE(vocab={ch: i for i, ch in enumerate(alphabet)}, merges=[]))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=False)
    tok.decoder = decoders.ByteLevel()
    PreTrainedTokenizerFast(
        tokenizer_object=tok, model_max_length=1_000_000
    ).save_pretrained(path)
    return str(path)


@pytest.fixture(scope="session")
def prompt_text():
    return PROMPT_TEXT


@pytest.fixture(scope="session")
def prompt_file(tmp_path_factory):
    p = tmp_path_factory.mktemp("prompts") / "prompt.txt"
    p.write_text(PROMPT_TEXT, encoding="utf-8")
    return str(p)
