"""Greedy decoding with repetition blocking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import EOS, PAD, SOS
from .model import ModelConfig, Params, decode_step, encode, init_decoder_state


@dataclass
class DecodeConfig:
    max_len: int = 20
    block_immediate_repeat: bool = True
    block_repeated_bigrams: bool = True

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def is_blocked(candidate: int, output: list[int], config: DecodeConfig) -> bool:
    if not output or candidate == EOS:
        return False
    prev = output[-1]
    if config.block_immediate_repeat and candidate == prev:
        return True
    if config.block_repeated_bigrams:
        for a, b in zip(output, output[1:]):
            if a == prev and b == candidate:
                return True
    return False


def greedy_search(step: Callable, state, config: DecodeConfig, banned=(PAD, SOS)) -> list[int]:
    """Generic greedy loop.

    ``step(prev_id, state) -> (scores over vocab, state)``.  At each step the
    best-scoring token that is neither banned nor blocked is emitted; EOS
    ends the sequence and is not returned.
    """
    output: list[int] = []
    prev = SOS
    for _ in range(config.max_len):
        scores, state = step(prev, state)
        scores = np.asarray(scores, dtype=float).reshape(-1)
        choice = None
        for tok in np.argsort(-scores, kind="stable"):
            tok = int(tok)
            if tok in banned or is_blocked(tok, output, config):
                continue
            choice = tok
            break
        if choice is None or choice == EOS:
            break
        output.append(choice)
        prev = choice
    return output


def greedy_decode(params: Params, config: ModelConfig, context_ids, p,
                  decode_config: DecodeConfig | None = None) -> list[int]:
    """Generate one ending (token ids, EOS excluded) for a single context."""
    decode_config = decode_config or DecodeConfig()
    context_ids = np.asarray(context_ids, dtype=np.int64)
    if context_ids.size == 0:
        raise ValueError("context must be non-empty")
    p = np.asarray(p, dtype=params["out.W"].dtype)[None, :]
    enc = encode(context_ids, params, config)
    state = init_decoder_state(enc, p, config)

    def step(prev, st):
        logits, st, _ = decode_step([prev], st, enc, p, params, config)
        return logits.data[0], st

    return greedy_search(step, state, decode_config)
