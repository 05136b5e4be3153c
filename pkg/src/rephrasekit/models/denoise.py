"""Span-infill corruption for denoising pretraining."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from rephrasekit.models.vocab import SPECIALS, MASK

MASK_SURFACE = SPECIALS[MASK]


@dataclass(frozen=True)
class DenoisePolicy:
    """mask_prob is the chance a span starts at a given token; span_infill
    collapses a whole geometric-length span into one mask symbol."""

    mask_prob: float = 0.15
    span_infill: bool = True
    span_continue: float = 0.5
    max_span: int = 8

    def __post_init__(self):
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError(f"mask_prob must be in [0, 1], got {self.mask_prob}")


def denoise_corrupt(
    tokens: Sequence[str], policy: DenoisePolicy = DenoisePolicy(), seed: int = 0
) -> tuple[list[str], list[str]]:
    """(corrupted input, reconstruction target); deterministic in seed.

    The target is always the original sequence. With span infill a span of
    1 + Geometric(span_continue) tokens collapses into a single mask
    symbol, otherwise each selected token is masked in place.
    """
    tokens = list(tokens)
    if not tokens:
        raise ValueError("cannot corrupt an empty sequence")
    rng = random.Random(seed)
    corrupted: list[str] = []
    i = 0
    while i < len(tokens):
        if rng.random() < policy.mask_prob:
            span = 1
            if policy.span_infill:
                while span < policy.max_span and rng.random() < policy.span_continue:
                    span += 1
            corrupted.append(MASK_SURFACE)
            i += span
        else:
            corrupted.append(tokens[i])
            i += 1
    return corrupted, tokens
