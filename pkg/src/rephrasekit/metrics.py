"""Evaluation: exact match, corpus BLEU, SARI, and the copy-error heuristic.

All comparisons run on default-normalized surfaces (lowercase, trailing
terminal punctuation stripped); the normalization is idempotent so
pre-normalized inputs are unaffected.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from rephrasekit.corpus import Dataset, RephraseClass, Utterance
from rephrasekit.text import Token, ngrams, normalize_surfaces, surfaces


class MetricError(Exception):
    pass


TokensLike = Sequence[Token | str]


def _norm(tokens: TokensLike) -> list[str]:
    return normalize_surfaces(surfaces(tokens))


@dataclass(frozen=True)
class SariBreakdown:
    """Per-action F1 scores in [0,1]; sari is 100 times their mean."""

    keep_f1: float
    add_f1: float
    delete_f1: float

    @property
    def sari(self) -> float:
        return 100.0 * (self.keep_f1 + self.add_f1 + self.delete_f1) / 3.0


@dataclass(frozen=True)
class EvalReport:
    """Corpus scores, all in [0,100], plus per-class utterance counts."""

    em: float
    em_any: float
    em_exact: float
    em_rephrase: float
    bleu: float
    sari: float
    n_exact: int
    n_rephrase: int
    sari_breakdown: SariBreakdown | None = None

    def to_dict(self) -> dict:
        d = {
            "em": self.em,
            "em_any": self.em_any,
            "em_exact": self.em_exact,
            "em_rephrase": self.em_rephrase,
            "bleu": self.bleu,
            "sari": self.sari,
            "n_exact": self.n_exact,
            "n_rephrase": self.n_rephrase,
        }
        if self.sari_breakdown is not None:
            d["sari_keep_f1"] = self.sari_breakdown.keep_f1
            d["sari_add_f1"] = self.sari_breakdown.add_f1
            d["sari_delete_f1"] = self.sari_breakdown.delete_f1
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        lines = []
        for key, value in self.to_dict().items():
            if isinstance(value, float):
                lines.append(f"{key:<16} {value:.2f}")
            else:
                lines.append(f"{key:<16} {value}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# exact match


def exact_match(pred: TokensLike, utterance: Utterance) -> bool:
    """Prediction equals the top target: content for EXACT, first annotation else."""
    return _norm(pred) == _norm(utterance.gold_target())


def em_any(pred: TokensLike, utterance: Utterance) -> bool:
    """Prediction equals any acceptable target (content counts for EXACT)."""
    p = _norm(pred)
    return any(p == _norm(ref) for ref in utterance.references())


# ---------------------------------------------------------------------------
# BLEU


def bleu(
    predictions: Sequence[TokensLike],
    references: Sequence[Sequence[TokensLike]],
    max_n: int = 4,
) -> float:
    """Corpus BLEU-4: closest-length brevity, add-one smoothing for n >= 2.

    Higher-order precisions use (matched+1)/(total+1); unigram precision is
    raw and a zero unigram match yields 0. Scores are percentages.
    """
    if len(predictions) == 0:
        raise MetricError("BLEU of an empty corpus is undefined")
    if len(predictions) != len(references):
        raise MetricError(
            f"got {len(predictions)} predictions but {len(references)} reference lists"
        )
    matched = [0] * max_n
    total = [0] * max_n
    pred_len = 0
    ref_len = 0
    for pred, refs in zip(predictions, references):
        if not refs:
            raise MetricError("every prediction needs at least one reference")
        p = _norm(pred)
        rs = [_norm(r) for r in refs]
        pred_len += len(p)
        ref_len += min(rs, key=lambda r: (abs(len(r) - len(p)), len(r))).__len__()
        for n in range(1, max_n + 1):
            pc = ngrams(p, n)
            clipped = Counter()
            for r in rs:
                rc = ngrams(r, n)
                for g, c in pc.items():
                    clipped[g] = max(clipped[g], min(c, rc[g]))
            matched[n - 1] += sum(clipped.values())
            total[n - 1] += sum(pc.values())
    if total[0] == 0 or matched[0] == 0:
        return 0.0
    log_sum = math.log(matched[0] / total[0])
    for n in range(1, max_n):
        log_sum += math.log((matched[n] + 1.0) / (total[n] + 1.0))
    brevity = 1.0 if pred_len > ref_len else math.exp(1.0 - ref_len / pred_len)
    return 100.0 * brevity * math.exp(log_sum / max_n)


# ---------------------------------------------------------------------------
# SARI


def _action_f1(tp: float, n_pred: float, n_gold: float) -> float:
    """F1 with the vacuous convention: both sets empty -> 1, one empty -> 0."""
    if n_pred == 0 and n_gold == 0:
        return 1.0
    if n_pred == 0 or n_gold == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_gold
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def sari(
    source: TokensLike,
    pred: TokensLike,
    references: Sequence[TokensLike],
    max_n: int = 4,
    delete_precision_only: bool = False,
) -> SariBreakdown:
    """Set-based SARI over n = 1..max_n with union-of-references semantics.

    Keep candidates are n-grams shared by source and prediction; add
    candidates are prediction n-grams absent from the source; delete
    candidates are source n-grams absent from the prediction. Targets come
    from the union over references (delete targets are source n-grams
    appearing in no reference). Per-n action scores are averaged over n,
    then the three action scores are averaged and scaled to [0,100].
    """
    if not references:
        raise MetricError("SARI requires at least one reference")
    src_toks = _norm(source)
    pred_toks = _norm(pred)
    ref_toks = [_norm(r) for r in references]
    keep_by_n, add_by_n, del_by_n = [], [], []
    for n in range(1, max_n + 1):
        src = set(ngrams(src_toks, n))
        prd = set(ngrams(pred_toks, n))
        ref_union = set()
        for r in ref_toks:
            ref_union |= set(ngrams(r, n))

        keep_pred = prd & src
        keep_gold = src & ref_union
        keep_by_n.append(_action_f1(len(keep_pred & keep_gold), len(keep_pred), len(keep_gold)))

        add_pred = prd - src
        add_gold = ref_union - src
        add_by_n.append(_action_f1(len(add_pred & add_gold), len(add_pred), len(add_gold)))

        del_pred = src - prd
        del_gold = src - ref_union
        tp = len(del_pred & del_gold)
        if delete_precision_only:
            if not del_pred and not del_gold:
                del_by_n.append(1.0)
            elif not del_pred:
                del_by_n.append(0.0)
            else:
                del_by_n.append(tp / len(del_pred))
        else:
            del_by_n.append(_action_f1(tp, len(del_pred), len(del_gold)))
    return SariBreakdown(
        keep_f1=sum(keep_by_n) / max_n,
        add_f1=sum(add_by_n) / max_n,
        delete_f1=sum(del_by_n) / max_n,
    )


# ---------------------------------------------------------------------------
# corpus evaluation


def corpus_eval(
    predictions: Mapping[str, TokensLike],
    dataset: Dataset,
    sari_delete_precision: bool = False,
) -> EvalReport:
    """Score one prediction per utterance; percentages over the whole set.

    Class-restricted EM over an absent class reports 0. Corpus SARI is the
    mean sentence SARI against all acceptable targets, with the content
    span as source.
    """
    if len(dataset) == 0:
        raise MetricError("cannot evaluate an empty dataset")
    missing = [u.id for u in dataset if u.id not in predictions]
    if missing:
        raise MetricError(f"missing predictions for {len(missing)} ids: {missing[:10]}")
    n_em = n_any = 0
    n_exact = n_rephrase = 0
    em_exact_hits = em_rephrase_hits = 0
    preds_for_bleu: list[list[str]] = []
    refs_for_bleu: list[list[list[str]]] = []
    sari_parts: list[SariBreakdown] = []
    for u in dataset:
        pred = predictions[u.id]
        hit = exact_match(pred, u)
        n_em += hit
        n_any += em_any(pred, u)
        if u.rephrase_class is RephraseClass.EXACT:
            n_exact += 1
            em_exact_hits += hit
        else:
            n_rephrase += 1
            em_rephrase_hits += hit
        refs = u.references()
        preds_for_bleu.append(_norm(pred))
        refs_for_bleu.append([_norm(r) for r in refs])
        sari_parts.append(
            sari(u.content_tokens, pred, refs, delete_precision_only=sari_delete_precision)
        )
    n = len(dataset)
    breakdown = SariBreakdown(
        keep_f1=sum(p.keep_f1 for p in sari_parts) / n,
        add_f1=sum(p.add_f1 for p in sari_parts) / n,
        delete_f1=sum(p.delete_f1 for p in sari_parts) / n,
    )
    return EvalReport(
        em=100.0 * n_em / n,
        em_any=100.0 * n_any / n,
        em_exact=100.0 * em_exact_hits / n_exact if n_exact else 0.0,
        em_rephrase=100.0 * em_rephrase_hits / n_rephrase if n_rephrase else 0.0,
        bleu=bleu(preds_for_bleu, refs_for_bleu),
        sari=sum(p.sari for p in sari_parts) / n,
        n_exact=n_exact,
        n_rephrase=n_rephrase,
        sari_breakdown=breakdown,
    )


def copy_error_rate(predictions: Mapping[str, TokensLike], dataset: Dataset) -> float:
    """Fraction of utterances whose content has a likely proper noun missing
    from the prediction (case-insensitive surface comparison)."""
    if len(dataset) == 0:
        raise MetricError("copy error rate of an empty dataset is undefined")
    errors = 0
    for u in dataset:
        pred = {s.lower() for s in surfaces(predictions.get(u.id, ()))}
        names = {t.surface.lower() for t in u.content_tokens if t.is_proper_noun_guess}
        if names - pred:
            errors += 1
    return errors / len(dataset)
