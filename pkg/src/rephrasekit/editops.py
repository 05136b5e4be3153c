"""LCS alignment and the Keep/Delete+phrase edit representation.

A rewrite is expressed as one tag per source token plus a final slot:
each tag keeps or deletes its token and may insert a phrase before it;
the final slot can only insert. ``realize`` inverts ``to_tags`` exactly
whenever the required phrases are covered by the vocabulary.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from rephrasekit import kernels
from rephrasekit.text import Token, surfaces


@dataclass(frozen=True)
class Alignment:
    """Monotone token alignment: kept pairs plus deleted/added complements."""

    kept: tuple[tuple[int, int], ...]
    deleted: tuple[int, ...]
    added: tuple[int, ...]

    @property
    def n_keep(self) -> int:
        return len(self.kept)

    @property
    def n_delete(self) -> int:
        return len(self.deleted)

    @property
    def n_add(self) -> int:
        return len(self.added)


class EditAction(Enum):
    KEEP = "KEEP"
    DELETE = "DELETE"


@dataclass(frozen=True)
class EditTag:
    """Action on one source token with an optional phrase inserted before it."""

    action: EditAction
    insert_before: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.insert_before is not None and len(self.insert_before) == 0:
            raise ValueError("insert phrase must be non-empty when present")


@dataclass(frozen=True)
class TagSequence:
    """One tag per source token plus a final insertion-only slot."""

    tags: tuple[EditTag, ...]

    def __post_init__(self):
        if self.tags and self.tags[-1].action is EditAction.DELETE:
            raise ValueError("DELETE is forbidden in the final slot")

    def __len__(self) -> int:
        return len(self.tags)

    def insert_phrases(self) -> list[tuple[str, ...]]:
        return [t.insert_before for t in self.tags if t.insert_before is not None]


class NotCovered:
    """Sentinel returned by ``to_tags`` when a phrase is outside the vocabulary."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NOT_COVERED"


NOT_COVERED = NotCovered()


@dataclass(frozen=True)
class PhraseVocabulary:
    """Insert phrases ordered by descending frequency (ties lexicographic)."""

    phrases: tuple[tuple[str, ...], ...]
    frequencies: tuple[int, ...]
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.phrases) != len(self.frequencies):
            raise ValueError("phrases and frequencies must have equal length")
        if len(set(self.phrases)) != len(self.phrases):
            raise ValueError("duplicate phrase in vocabulary")
        if any(a < b for a, b in zip(self.frequencies, self.frequencies[1:])):
            raise ValueError("frequencies must be non-increasing")
        self._index.update({p: i for i, p in enumerate(self.phrases)})

    def __len__(self) -> int:
        return len(self.phrases)

    def __contains__(self, phrase: tuple[str, ...]) -> bool:
        return phrase in self._index

    def index_of(self, phrase: tuple[str, ...]) -> int:
        return self._index[phrase]

    def top_k(self, k: int) -> "PhraseVocabulary":
        return PhraseVocabulary(self.phrases[:k], self.frequencies[:k])

    def save(self, path: str | Path) -> None:
        """One phrase per line with tab-separated frequency, rank order."""
        with open(path, "w", encoding="utf-8") as f:
            for phrase, freq in zip(self.phrases, self.frequencies):
                f.write(f"{' '.join(phrase)}\t{freq}\n")

    @classmethod
    def load(cls, path: str | Path) -> "PhraseVocabulary":
        phrases, freqs = [], []
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line:
                    continue
                phrase, freq = line.split("\t")
                phrases.append(tuple(phrase.split(" ")))
                freqs.append(int(freq))
        return cls(tuple(phrases), tuple(freqs))


def align(source: Sequence[Token | str], target: Sequence[Token | str]) -> Alignment:
    """Align by a longest common subsequence, ties toward earliest source indices."""
    src = surfaces(source)
    tgt = surfaces(target)
    ids = {}
    for s in src + tgt:
        ids.setdefault(s, len(ids))
    a = np.array([ids[s] for s in src], dtype=np.int64)
    b = np.array([ids[s] for s in tgt], dtype=np.int64)
    kept = kernels.lcs_kept(a, b)
    kept_pairs = tuple((int(i), int(j)) for i, j in kept)
    kept_src = {i for i, _ in kept_pairs}
    kept_tgt = {j for _, j in kept_pairs}
    deleted = tuple(i for i in range(len(src)) if i not in kept_src)
    added = tuple(j for j in range(len(tgt)) if j not in kept_tgt)
    return Alignment(kept_pairs, deleted, added)


def to_tags(
    source: Sequence[Token | str],
    target: Sequence[Token | str],
    vocab: PhraseVocabulary | None = None,
) -> TagSequence | NotCovered:
    """Convert a (source, target) pair into edit tags.

    Contiguous added target runs become insert phrases at the slot of the
    next kept source token (or the final slot). With ``vocab`` given,
    returns NOT_COVERED iff some required phrase is missing from it.
    """
    src = surfaces(source)
    tgt = surfaces(target)
    alignment = align(src, tgt)
    kept_by_src = dict(alignment.kept)
    kept_tgt = {j for _, j in alignment.kept}
    # slot of the next kept source token for each added target index
    n_slots = len(src) + 1
    inserts: dict[int, list[str]] = {}
    kept_sorted = alignment.kept  # increasing in both coordinates
    for j in alignment.added:
        slot = n_slots - 1
        for si, tj in kept_sorted:
            if tj > j:
                slot = si
                break
        inserts.setdefault(slot, []).append(tgt[j])
    tags = []
    for i in range(len(src)):
        phrase = tuple(inserts[i]) if i in inserts else None
        action = EditAction.KEEP if i in kept_by_src else EditAction.DELETE
        tags.append(EditTag(action, phrase))
    final_phrase = tuple(inserts[n_slots - 1]) if (n_slots - 1) in inserts else None
    tags.append(EditTag(EditAction.KEEP, final_phrase))
    seq = TagSequence(tuple(tags))
    if vocab is not None:
        for phrase in seq.insert_phrases():
            if phrase not in vocab:
                return NOT_COVERED
    return seq


def realize(source: Sequence[Token | str], tags: TagSequence) -> list[str]:
    """Apply ``tags`` to ``source``: emit inserts, then kept tokens."""
    src = surfaces(source)
    if len(tags) != len(src) + 1:
        raise ValueError(f"expected {len(src) + 1} tags for {len(src)} source tokens, got {len(tags)}")
    out: list[str] = []
    for i, tag in enumerate(tags.tags):
        if tag.insert_before is not None:
            out.extend(tag.insert_before)
        if i < len(src) and tag.action is EditAction.KEEP:
            out.append(src[i])
    return out


def extract_phrases(pairs: Iterable[tuple[Sequence, Sequence]]) -> PhraseVocabulary:
    """Collect every insert phrase over ``pairs``, ranked by frequency then lexicographically."""
    counts: Counter = Counter()
    empty = True
    for source, target in pairs:
        empty = False
        seq = to_tags(source, target)
        counts.update(seq.insert_phrases())
    if empty:
        raise ValueError("extract_phrases requires at least one pair")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return PhraseVocabulary(
        tuple(p for p, _ in ranked), tuple(c for _, c in ranked)
    )


def coverage(pairs: Iterable[tuple[Sequence, Sequence]], vocab: PhraseVocabulary) -> float:
    """Fraction of pairs whose tag conversion is covered by ``vocab``."""
    total = 0
    covered = 0
    for source, target in pairs:
        total += 1
        if to_tags(source, target, vocab) is not NOT_COVERED:
            covered += 1
    return covered / total if total else 0.0
