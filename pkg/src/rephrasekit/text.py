"""Deterministic tokenization, normalization, and n-gram utilities.

The tokenizer splits on whitespace and peels leading/trailing punctuation
into separate tokens. It is intentionally simple: the corpus is short
conversational English, and keeping the rules explicit makes every
downstream metric reproducible bit-for-bit within this repo.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

# Punctuation peeled off token edges. Internal marks (contractions like
# "I'll") are left alone.
SPLIT_PUNCT = set(".,!?'’;:")

# Marks stripped from the end of a sequence by terminal-punct normalization.
TERMINAL_PUNCT = {".", "!", "?"}


@dataclass(frozen=True)
class Token:
    """One surface token.

    ``is_proper_noun_guess`` is a crude flag (capitalized and not
    sentence-initial) consumed only by the copy-error heuristic.
    """

    surface: str
    is_proper_noun_guess: bool = False

    def __post_init__(self):
        if not self.surface:
            raise ValueError("token surface must be non-empty")
        if any(ch.isspace() for ch in self.surface):
            raise ValueError(f"token surface contains whitespace: {self.surface!r}")


@dataclass(frozen=True)
class NormalizationPolicy:
    """Pure configuration for :func:`normalize`; idempotent by construction."""

    lowercase: bool = True
    strip_terminal_punct: bool = True


# Policy used for every metric in this repo unless a caller overrides it.
DEFAULT_POLICY = NormalizationPolicy(lowercase=True, strip_terminal_punct=True)


def _split_chunk(chunk: str) -> list[str]:
    """Split one whitespace-delimited chunk into surface strings."""
    leading: list[str] = []
    trailing: list[str] = []
    while chunk and chunk[0] in SPLIT_PUNCT:
        leading.append(chunk[0])
        chunk = chunk[1:]
    while chunk and chunk[-1] in SPLIT_PUNCT:
        trailing.append(chunk[-1])
        chunk = chunk[:-1]
    middle = [chunk] if chunk else []
    return leading + middle + list(reversed(trailing))


def tokenize(text: str) -> list[Token]:
    """Tokenize ``text`` by whitespace, then peel edge punctuation.

    The first token of the result counts as sentence-initial for the
    proper-noun guess.
    """
    surfaces: list[str] = []
    for chunk in text.split():
        surfaces.extend(_split_chunk(chunk))
    tokens = []
    for idx, surface in enumerate(surfaces):
        guess = idx > 0 and surface[0].isupper()
        tokens.append(Token(surface, guess))
    return tokens


def surfaces(tokens: Iterable[Token | str]) -> list[str]:
    """Surface strings of ``tokens`` (accepts Token objects or raw strings)."""
    return [t.surface if isinstance(t, Token) else t for t in tokens]


def detokenize(tokens: Sequence[Token | str]) -> str:
    """Join surfaces with spaces, attaching punctuation to the previous token."""
    out: list[str] = []
    for s in surfaces(tokens):
        if out and s in SPLIT_PUNCT:
            out[-1] += s
        else:
            out.append(s)
    return " ".join(out)


def normalize_surfaces(toks: Sequence[str], policy: NormalizationPolicy = DEFAULT_POLICY) -> list[str]:
    """Apply ``policy`` to a list of surface strings."""
    out = [t.lower() for t in toks] if policy.lowercase else list(toks)
    if policy.strip_terminal_punct:
        # strip every trailing terminal mark so the operation is idempotent
        while out and out[-1] in TERMINAL_PUNCT:
            out.pop()
    return out


def normalize(tokens: Sequence[Token], policy: NormalizationPolicy = DEFAULT_POLICY) -> list[Token]:
    """Apply ``policy`` to ``tokens``, preserving order and token flags."""
    kept = list(tokens)
    if policy.strip_terminal_punct:
        while kept and kept[-1].surface in TERMINAL_PUNCT:
            kept.pop()
    if policy.lowercase:
        kept = [Token(t.surface.lower(), t.is_proper_noun_guess) for t in kept]
    return kept


def ngrams(tokens: Sequence[Token | str], n: int) -> Counter:
    """All contiguous ``n``-token windows (as surface tuples) with multiplicity."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    surf = surfaces(tokens)
    return Counter(tuple(surf[i : i + n]) for i in range(len(surf) - n + 1))
