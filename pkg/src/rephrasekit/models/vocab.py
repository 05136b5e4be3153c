"""Token vocabulary with the extended-id scheme for copyable OOV words.

Ids 0..4 are reserved specials. Building ranks surfaces by frequency
(descending, ties alphabetical) and keeps at most ``max_size`` ordinary
types. Extended encoding gives each out-of-vocabulary source token of an
example a temporary id ``len(vocab) + k`` so a copy mechanism can point
at it; targets encoded against the same OOV list share those ids.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterable, Sequence

PAD, BOS, EOS, UNK, MASK = 0, 1, 2, 3, 4
SPECIALS = ("<pad>", "<s>", "</s>", "<unk>", "<mask>")


class Vocabulary:
    def __init__(self, itos: Sequence[str]):
        if tuple(itos[: len(SPECIALS)]) != SPECIALS:
            raise ValueError(f"vocabulary must start with the specials {SPECIALS}")
        self.itos = list(itos)
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate surfaces in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, surface: str) -> bool:
        return surface in self.stoi

    def id(self, surface: str) -> int:
        return self.stoi.get(surface, UNK)

    def surface(self, idx: int) -> str:
        return self.itos[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Sequence[int], strip_specials: bool = True) -> list[str]:
        out = []
        for i in ids:
            if strip_specials and i in (PAD, BOS, EOS):
                continue
            out.append(self.itos[i])
        return out

    def encode_extended(self, source: Sequence[str]) -> tuple[list[int], list[int], list[str]]:
        """(vocab ids, extended ids, per-example OOV surfaces) for a source."""
        ids, ext, oovs = [], [], []
        for t in source:
            i = self.stoi.get(t, UNK)
            ids.append(i)
            if i == UNK:
                if t not in oovs:
                    oovs.append(t)
                ext.append(len(self.itos) + oovs.index(t))
            else:
                ext.append(i)
        return ids, ext, oovs

    def encode_target_extended(self, target: Sequence[str], oovs: Sequence[str]) -> list[int]:
        """Target ids where source OOVs resolve to the source's extended ids."""
        out = []
        lookup = {t: i for i, t in enumerate(oovs)}
        for t in target:
            i = self.stoi.get(t, UNK)
            if i == UNK and t in lookup:
                i = len(self.itos) + lookup[t]
            out.append(i)
        return out

    def surface_extended(self, idx: int, oovs: Sequence[str]) -> str:
        if idx < len(self.itos):
            return self.itos[idx]
        return oovs[idx - len(self.itos)]


def build_vocab(
    token_streams: Iterable[Sequence[str]],
    max_size: int = 8000,
    min_freq: int = 1,
) -> Vocabulary:
    """Frequency-ranked vocabulary capped at max_size ordinary types."""
    counts: Counter[str] = Counter()
    for stream in token_streams:
        counts.update(stream)
    for special in SPECIALS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [s for s, c in ranked if c >= min_freq][:max_size]
    return Vocabulary(list(SPECIALS) + kept)
