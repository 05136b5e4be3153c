"""Data model, loaders, splits, statistics, and the synthetic grammar.

An utterance is a tokenized query with a content span, an EXACT/REPHRASE
class, and zero or more reference rephrases (first = resolved top
annotation). The synthetic generator produces a closed grammar whose
gold rephrases are built by rule (pronoun flip, subject-aux inversion,
do-support), with freely invented proper nouns so held-out names are
typically out-of-vocabulary and must be copied.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from rephrasekit import editops
from rephrasekit.text import DEFAULT_POLICY, Token, detokenize, normalize, surfaces, tokenize


class CorpusError(Exception):
    """Base for loader and validation failures."""


class ParseError(CorpusError):
    pass


class ValidationError(CorpusError):
    pass


class RephraseClass(Enum):
    EXACT = "EXACT"
    REPHRASE = "REPHRASE"


class ChangeCategory(Enum):
    NONE = "NONE"
    PRONOUN = "PRONOUN"
    QUESTION = "QUESTION"
    PRONOUN_AND_QUESTION = "PRONOUN_AND_QUESTION"


@dataclass(frozen=True)
class Utterance:
    """One query with its content span, class, and reference rephrases."""

    id: str
    query_tokens: tuple[Token, ...]
    content_span: tuple[int, int]
    rephrase_class: RephraseClass
    rephrases: tuple[tuple[Token, ...], ...] = ()

    def __post_init__(self):
        start, end = self.content_span
        if not (0 <= start < end <= len(self.query_tokens)):
            raise ValidationError(
                f"utterance {self.id}: span [{start}, {end}) outside query of "
                f"{len(self.query_tokens)} tokens"
            )
        if self.rephrase_class is RephraseClass.REPHRASE and not self.rephrases:
            raise ValidationError(f"utterance {self.id}: REPHRASE requires at least one rephrase")

    @property
    def content_tokens(self) -> tuple[Token, ...]:
        start, end = self.content_span
        return self.query_tokens[start:end]

    def references(self) -> list[tuple[Token, ...]]:
        """All acceptable targets: content first for EXACT, else the annotations."""
        if self.rephrase_class is RephraseClass.EXACT:
            return [self.content_tokens, *self.rephrases]
        return list(self.rephrases)

    def gold_target(self) -> tuple[Token, ...]:
        """Top annotation for REPHRASE, the content itself for EXACT."""
        if self.rephrase_class is RephraseClass.EXACT:
            return self.content_tokens
        return self.rephrases[0]


@dataclass
class Dataset:
    utterances: list[Utterance]
    split_tag: str | None = None

    def __post_init__(self):
        ids = [u.id for u in self.utterances]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValidationError(f"duplicate utterance ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self) -> Iterator[Utterance]:
        return iter(self.utterances)

    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self.utterances}

    def pairs(self, normalized: bool = False) -> list[tuple[list[str], list[str]]]:
        """(content, gold target) surface pairs for training and edit statistics."""
        out = []
        for u in self.utterances:
            src, tgt = u.content_tokens, u.gold_target()
            if normalized:
                src, tgt = normalize(src), normalize(tgt)
            out.append((surfaces(src), surfaces(tgt)))
        return out


@dataclass(frozen=True)
class CorpusStats:
    """Length/overlap averages over REPHRASE pairs plus change-category frequencies."""

    avg_source_len: float
    avg_target_len: float
    avg_keep: float
    avg_add: float
    avg_delete: float
    class_freq: dict[ChangeCategory, float]

    def to_dict(self) -> dict:
        return {
            "avg_source_len": self.avg_source_len,
            "avg_target_len": self.avg_target_len,
            "avg_keep": self.avg_keep,
            "avg_add": self.avg_add,
            "avg_delete": self.avg_delete,
            "class_freq": {c.value: f for c, f in self.class_freq.items()},
        }

    def to_text(self) -> str:
        lines = [
            f"source_len {self.avg_source_len:.2f}",
            f"target_len {self.avg_target_len:.2f}",
            f"keep       {self.avg_keep:.2f}",
            f"add        {self.avg_add:.2f}",
            f"delete     {self.avg_delete:.2f}",
        ]
        for cat in ChangeCategory:
            lines.append(f"{cat.value:<22} {100.0 * self.class_freq[cat]:.1f}%")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# change classification

PRONOUN_SUBSTITUTIONS: dict[str, frozenset[str]] = {
    "i": frozenset({"you"}),
    "you": frozenset({"i"}),
    "me": frozenset({"you"}),
    "my": frozenset({"your"}),
    "your": frozenset({"my"}),
    "mine": frozenset({"yours"}),
    "he": frozenset({"you"}),
    "she": frozenset({"you"}),
    "him": frozenset({"you"}),
    "her": frozenset({"you", "your"}),
    "his": frozenset({"your"}),
    "we": frozenset({"you"}),
    "us": frozenset({"you"}),
    "our": frozenset({"your"}),
}

_AUXILIARIES = {
    "do", "does", "did", "can", "could", "will", "would", "shall", "should",
    "is", "are", "am", "was", "were", "has", "have", "had", "may", "might", "must",
}
_WH_WORDS = {"what", "when", "where", "who", "whom", "whose", "which", "why", "how"}


def is_question_formed(tokens: Sequence[str]) -> bool:
    """Interrogative word order: trailing '?', aux-first, or wh-word + aux."""
    toks = [t.lower() for t in tokens]
    if not toks:
        return False
    if toks[-1] == "?":
        return True
    if toks[0] in _AUXILIARIES:
        return True
    return toks[0] in _WH_WORDS and len(toks) > 1 and toks[1] in _AUXILIARIES


def classify_change(
    content: Sequence[Token | str], reference: Sequence[Token | str]
) -> ChangeCategory:
    """Heuristic change category between a content span and one reference."""
    src = [s.lower() for s in surfaces(content)]
    tgt = [s.lower() for s in surfaces(reference)]
    alignment = editops.align(src, tgt)
    deleted = {src[i] for i in alignment.deleted}
    added = {tgt[j] for j in alignment.added}
    pronoun = any(
        s in deleted and (PRONOUN_SUBSTITUTIONS[s] & added) for s in PRONOUN_SUBSTITUTIONS
    )
    question = is_question_formed(tgt) and not is_question_formed(src)
    if pronoun and question:
        return ChangeCategory.PRONOUN_AND_QUESTION
    if pronoun:
        return ChangeCategory.PRONOUN
    if question:
        return ChangeCategory.QUESTION
    return ChangeCategory.NONE


# ---------------------------------------------------------------------------
# loading / saving

_BRACKET_RE = re.compile(r"[\[\]]")


def _span_from_brackets(raw_query: str, line_no: int) -> tuple[list[Token], tuple[int, int]]:
    """Recover the content span from '[ ... ]' markup in raw query text."""
    spaced = _BRACKET_RE.sub(lambda m: f" {m.group(0)} ", raw_query)
    toks = [t.surface for t in tokenize(spaced)]
    if toks.count("[") != 1 or toks.count("]") != 1:
        raise ParseError(f"line {line_no}: expected exactly one [ ... ] span in query")
    i_open = toks.index("[")
    i_close = toks.index("]")
    if i_close <= i_open + 1:
        raise ParseError(f"line {line_no}: empty or inverted bracket span")
    cleaned = toks[:i_open] + toks[i_open + 1 : i_close] + toks[i_close + 1 :]
    tokens = tokenize(" ".join(cleaned))
    return tokens, (i_open, i_close - 1)


def _utterance_from_record(rec: dict, line_no: int) -> Utterance:
    try:
        query = rec["query"]
    except KeyError:
        raise ParseError(f"line {line_no}: record is missing 'query'")
    uid = str(rec.get("id", f"line-{line_no}"))
    if "span_start" in rec and "span_end" in rec:
        tokens = tokenize(query)
        span = (int(rec["span_start"]), int(rec["span_end"]))
    else:
        tokens, span = _span_from_brackets(query, line_no)
    raw_class = rec.get("class")
    rephrases = tuple(tuple(tokenize(r)) for r in rec.get("rephrases", []) if r.strip())
    if raw_class is None:
        cls = RephraseClass.REPHRASE if rephrases else RephraseClass.EXACT
    else:
        try:
            cls = RephraseClass(raw_class.upper())
        except ValueError:
            raise ParseError(f"line {line_no}: unknown class {raw_class!r}")
    try:
        return Utterance(uid, tuple(tokens), span, cls, rephrases)
    except ValidationError as exc:
        raise ValidationError(f"line {line_no}: {exc}") from None


@dataclass(frozen=True)
class TsvColumns:
    """Column indices for the TSV adapter; unspecified fields are inferred."""

    query: int
    rephrases: tuple[int, ...] = ()
    id: int | None = None
    rephrase_class: int | None = None
    span_start: int | None = None
    span_end: int | None = None

    @classmethod
    def parse(cls, spec: str) -> "TsvColumns":
        """Parse 'query=0,class=1,rephrases=2+3' style CLI specs."""
        kwargs: dict = {}
        for part in spec.split(","):
            key, _, value = part.partition("=")
            key = key.strip()
            if key == "class":
                key = "rephrase_class"
            if key == "rephrases":
                kwargs[key] = tuple(int(v) for v in value.split("+"))
            elif key in ("query", "id", "rephrase_class", "span_start", "span_end"):
                kwargs[key] = int(value)
            else:
                raise ValueError(f"unknown TSV column field {key!r}")
        if "query" not in kwargs:
            raise ValueError("TSV column spec must include query=<index>")
        return cls(**kwargs)


def load_dataset(
    path: str | Path,
    fmt: str = "jsonl",
    tsv_columns: TsvColumns | None = None,
    split_tag: str | None = None,
) -> Dataset:
    """Load a dataset from line-delimited JSON or a column-mapped TSV."""
    path = Path(path)
    utterances: list[Utterance] = []
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"line {line_no}: invalid JSON ({exc.msg})") from None
                utterances.append(_utterance_from_record(rec, line_no))
    elif fmt == "tsv":
        if tsv_columns is None:
            raise ValueError("tsv format requires tsv_columns")
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                cols = line.split("\t")
                try:
                    rec: dict = {"query": cols[tsv_columns.query]}
                    if tsv_columns.id is not None:
                        rec["id"] = cols[tsv_columns.id]
                    if tsv_columns.rephrase_class is not None:
                        rec["class"] = cols[tsv_columns.rephrase_class]
                    if tsv_columns.span_start is not None and tsv_columns.span_end is not None:
                        rec["span_start"] = cols[tsv_columns.span_start]
                        rec["span_end"] = cols[tsv_columns.span_end]
                    rec["rephrases"] = [
                        cols[i] for i in tsv_columns.rephrases if i < len(cols) and cols[i].strip()
                    ]
                except IndexError:
                    raise ParseError(
                        f"line {line_no}: expected at least "
                        f"{tsv_columns.query + 1} tab-separated columns"
                    ) from None
                utterances.append(_utterance_from_record(rec, line_no))
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    return Dataset(utterances, split_tag=split_tag)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the canonical JSONL form (UTF-8, one record per line)."""
    with open(path, "w", encoding="utf-8") as f:
        for u in dataset:
            rec = {
                "id": u.id,
                "query": detokenize(u.query_tokens),
                "span_start": u.content_span[0],
                "span_end": u.content_span[1],
                "class": u.rephrase_class.value,
                "rephrases": [detokenize(r) for r in u.rephrases],
            }
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# splitting and statistics


def split(
    dataset: Dataset, ratios: tuple[float, float, float], seed: int
) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic 3-way partition into train/test/valid by ``ratios``."""
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(dataset)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(ratios[0] * n))
    n_test = min(int(round(ratios[1] * n)), n - n_train)
    parts = (
        [dataset.utterances[i] for i in order[:n_train]],
        [dataset.utterances[i] for i in order[n_train : n_train + n_test]],
        [dataset.utterances[i] for i in order[n_train + n_test :]],
    )
    return (
        Dataset(parts[0], split_tag="train"),
        Dataset(parts[1], split_tag="test"),
        Dataset(parts[2], split_tag="valid"),
    )


def compute_stats(dataset: Dataset) -> CorpusStats:
    """Table-style length/overlap averages and change-category frequencies.

    Length and keep/add/delete averages cover REPHRASE utterances (content
    vs top reference, default-normalized); frequencies cover every
    utterance, with EXACT counted as NONE.
    """
    if len(dataset) == 0:
        raise ValueError("cannot compute statistics of an empty dataset")
    src_lens: list[int] = []
    tgt_lens: list[int] = []
    keeps: list[int] = []
    adds: list[int] = []
    dels: list[int] = []
    counts = {cat: 0 for cat in ChangeCategory}
    for u in dataset:
        content = surfaces(normalize(u.content_tokens, DEFAULT_POLICY))
        if u.rephrase_class is RephraseClass.EXACT:
            counts[ChangeCategory.NONE] += 1
            continue
        reference = surfaces(normalize(u.rephrases[0], DEFAULT_POLICY))
        counts[classify_change(content, reference)] += 1
        alignment = editops.align(content, reference)
        src_lens.append(len(content))
        tgt_lens.append(len(reference))
        keeps.append(alignment.n_keep)
        adds.append(alignment.n_add)
        dels.append(alignment.n_delete)
    if not src_lens:
        raise ValueError("dataset has no REPHRASE utterances; length stats undefined")
    n = len(dataset)
    return CorpusStats(
        avg_source_len=float(np.mean(src_lens)),
        avg_target_len=float(np.mean(tgt_lens)),
        avg_keep=float(np.mean(keeps)),
        avg_add=float(np.mean(adds)),
        avg_delete=float(np.mean(dels)),
        class_freq={cat: counts[cat] / n for cat in ChangeCategory},
    )


# ---------------------------------------------------------------------------
# synthetic grammar

_NAME_ONSETS = [
    "bra", "ki", "don", "mar", "tan", "vel", "jo", "ser", "lu", "pe",
    "ran", "mi", "ka", "zor", "fen", "gal", "tor", "nes", "ol", "dru",
    "sa", "ve", "li", "rom",
]
_NAME_CODAS = [
    "d", "ra", "na", "to", "sh", "vin", "la", "mos", "ric", "bel",
    "ton", "dra", "nis", "ver", "min", "den", "sam", "lor", "rek", "di",
]

_AUX = ["can", "will", "should", "must"]
_VERB_OBJ = [
    ("bring", ["the", "keys"]),
    ("bring", ["the", "tickets"]),
    ("take", ["the", "car"]),
    ("grab", ["lunch"]),
    ("grab", ["the", "charger"]),
    ("watch", ["the", "kids"]),
    ("clean", ["the", "garage"]),
    ("book", ["the", "flight"]),
]
_VERB_NAME = ["drive", "call", "meet", "help"]
_V3S_BASE = [("has", "have"), ("wants", "want"), ("needs", "need"), ("likes", "like"), ("knows", "know")]
_WH_NP = [
    ("when", ["dinner"]),
    ("when", ["the", "meeting"]),
    ("when", ["the", "movie"]),
    ("where", ["the", "party"]),
    ("where", ["the", "game"]),
]
_IMP_VERB_NOUN = [
    ("take", ["pills"]),
    ("charge", ["phone"]),
    ("pack", ["bag"]),
    ("water", ["plants"]),
    ("feed", ["cat"]),
]
_OBJ_PRON_VERB = [
    ("pick", ["up"]),
    ("call", ["tonight"]),
    ("drive", ["home"]),
    ("meet", ["at", "noon"]),
]
_EXACT_I = [
    ["i", "will", "be", "on", "time"],
    ["i", "am", "running", "late"],
    ["i", "will", "be", "there", "soon"],
    ["i", "can", "not", "make", "it"],
]
_EXACT_AUX = [
    ["will", "i", "have", "to", "work", "on", "friday"],
    ["can", "we", "push", "the", "deadline"],
    ["do", "we", "still", "meet", "today"],
]
_EXACT_THE = [
    ["the", "meeting", "moved", "to", "noon"],
    ["the", "report", "is", "ready"],
    ["the", "flight", "lands", "at", "nine"],
]


def _sample_name(rng: random.Random) -> str:
    parts = [rng.choice(_NAME_ONSETS), rng.choice(_NAME_CODAS)]
    if rng.random() < 0.85:
        parts.append(rng.choice(_NAME_CODAS))
    return "".join(parts).capitalize()


def _rephrase_content(rng: random.Random) -> tuple[list[str], list[str], str]:
    """One REPHRASE content with its rule-produced gold; returns (content, gold, frame_kind)."""
    kind = rng.choices(
        ["third_decl", "imperative_my", "embedded_wh", "if_do", "if_aux", "i_object"],
        weights=[22, 13, 20, 20, 15, 10],
    )[0]
    subj = rng.choice(["he", "she"])
    if kind == "third_decl":
        aux = rng.choice(_AUX)
        if rng.random() < 0.6:
            verb = rng.choice(_VERB_NAME)
            obj = [_sample_name(rng), rng.choice(["today", "tomorrow", "later"])]
        else:
            verb, obj = rng.choice(_VERB_OBJ)
        content = [subj, aux, verb, *obj]
        gold = ["you", aux, verb, *obj]
        return content, gold, "tell"
    if kind == "imperative_my":
        verb, noun = rng.choice(_IMP_VERB_NOUN)
        content = [verb, "my", *noun]
        gold = [verb, "your", *noun]
        return content, gold, "remind"
    if kind == "embedded_wh":
        wh, np_ = rng.choice(_WH_NP)
        content = [wh, *np_, "is"]
        gold = [wh, "is", *np_]
        return content, gold, "ask"
    if kind == "if_do":
        v3s, base = rng.choice(_V3S_BASE)
        if rng.random() < 0.55:
            obj = [_sample_name(rng)]
        else:
            obj = rng.choice([["my", "keys"], ["the", "address"], ["more", "time"], ["the", "code"]])
        content = ["if", subj, v3s, *obj]
        gold = ["do", "you", base, *obj]
        return content, gold, "ask"
    if kind == "if_aux":
        aux = rng.choice(_AUX[:2])
        if rng.random() < 0.55:
            verb = rng.choice(_VERB_NAME)
            obj = [_sample_name(rng), rng.choice(["today", "tomorrow"])]
        else:
            verb, obj = rng.choice(_VERB_OBJ)
        content = ["if", subj, aux, verb, *obj]
        gold = [aux, "you", verb, *obj]
        return content, gold, "ask"
    # i_object: "i can pick her up" -> "i can pick you up"
    aux = rng.choice(_AUX[:2])
    verb, tail = rng.choice(_OBJ_PRON_VERB)
    pron = rng.choice(["her", "him"])
    content = ["i", aux, verb, pron, *tail]
    gold = ["i", aux, verb, "you", *tail]
    return content, gold, "tell"


def _exact_content(rng: random.Random) -> list[str]:
    roll = rng.random()
    if roll < 0.5:
        name = _sample_name(rng)
        return rng.choice(
            [
                ["i", "will", "meet", name, "at", "noon"],
                ["i", "can", "drive", name, "on", "sunday"],
                [name, "left", "a", "message"],
            ]
        )
    if roll < 0.7:
        return list(rng.choice(_EXACT_I))
    if roll < 0.85:
        return list(rng.choice(_EXACT_AUX))
    return list(rng.choice(_EXACT_THE))


_FRAMES = {
    "tell": [
        lambda name: ["tell", name, "that"],
        lambda name: ["let", name, "know"],
        lambda name: ["message", name, "and", "say"],
    ],
    "ask": [
        lambda name: ["ask", name],
        lambda name: ["message", name, "and", "ask"],
    ],
    "remind": [lambda name: ["remind", "me", "to"]],
    "exact": [
        lambda name: ["tell", name],
        lambda name: ["ask", name],
        lambda name: ["message", name, "and", "say"],
    ],
}


def generate_synthetic(n: int, seed: int) -> Dataset:
    """Sample ``n`` utterances from the closed grammar, deterministic in ``seed``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = random.Random(seed)
    utterances = []
    for i in range(n):
        frame_name = _sample_name(rng)
        if rng.random() < 0.45:
            content = _exact_content(rng)
            frame = rng.choice(_FRAMES["exact"])(frame_name)
            cls = RephraseClass.EXACT
            rephrases: tuple = ()
        else:
            content, gold, frame_kind = _rephrase_content(rng)
            frame = rng.choice(_FRAMES[frame_kind])(frame_name)
            cls = RephraseClass.REPHRASE
            rephrases = (tuple(tokenize(" ".join(gold))),)
        query = frame + content
        span = (len(frame), len(query))
        utterances.append(
            Utterance(
                id=f"syn-{seed}-{i:05d}",
                query_tokens=tuple(tokenize(" ".join(query))),
                content_span=span,
                rephrase_class=cls,
                rephrases=rephrases,
            )
        )
    return Dataset(utterances)
