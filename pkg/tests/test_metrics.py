import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bleu_brute, sari_brute
from rephrasekit.corpus import Dataset, RephraseClass, Utterance
from rephrasekit.metrics import (
    MetricError,
    bleu,
    copy_error_rate,
    corpus_eval,
    em_any,
    exact_match,
    sari,
)
from rephrasekit.text import Token, tokenize


def _utt(uid, query, span, cls, rephrases=()):
    return Utterance(
        uid, tuple(tokenize(query)), span, cls,
        tuple(tuple(tokenize(r)) for r in rephrases),
    )


def _rand_tokens(rng, lo=0, hi=9, alphabet=8):
    n = int(rng.integers(lo, hi))
    return [f"t{int(x)}" for x in rng.integers(0, alphabet, size=n)]


# -- exact match ------------------------------------------------------------


def test_exact_match_uses_normalization():
    u = _utt("u", "tell him He is late.", (2, 6), RephraseClass.REPHRASE,
             ["You are late!"])
    assert exact_match(["you", "are", "late"], u)
    assert exact_match(["You", "are", "late", "."], u)
    assert not exact_match(["you", "are", "very", "late"], u)


def test_exact_match_exact_class_targets_content():
    u = _utt("u", "send hi there", (1, 3), RephraseClass.EXACT)
    assert exact_match(["hi", "there"], u)


def test_em_any_accepts_any_reference():
    u = _utt("u", "tell him he is late", (2, 5), RephraseClass.REPHRASE,
             ["you are late", "is he late"])
    assert em_any(["is", "he", "late"], u)
    assert not exact_match(["is", "he", "late"], u)


def test_em_any_exact_class_includes_content_and_annotations():
    u = _utt("u", "send hi there", (1, 3), RephraseClass.EXACT, ["hello there"])
    assert em_any(["hi", "there"], u)
    assert em_any(["hello", "there"], u)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from("abc"), min_size=0, max_size=5), st.integers(0, 1))
def test_em_implies_em_any(pred, which):
    u = _utt("u", "tell him a b c", (2, 5), RephraseClass.REPHRASE,
             ["a b", "b c"] if which else ["c", "a b c"])
    if exact_match(pred, u):
        assert em_any(pred, u)


# -- BLEU --------------------------------------------------------------------


def test_bleu_hand_value():
    # precisions 5/6, (3+1)/(5+1), (2+1)/(4+1), (1+1)/(3+1); BP = 1
    preds = [["the", "cat", "sat", "on", "the", "mat"]]
    refs = [[["the", "cat", "sat", "on", "a", "mat"]]]
    want = 100.0 * ((5 / 6) * (4 / 6) * (3 / 5) * (2 / 4)) ** 0.25
    assert bleu(preds, refs) == pytest.approx(want, abs=1e-9)


def test_bleu_matches_oracle_fuzz():
    rng = np.random.default_rng(0)
    for _ in range(150):
        n = int(rng.integers(1, 5))
        preds = [_rand_tokens(rng, 1, 9) for _ in range(n)]
        refs = [
            [_rand_tokens(rng, 1, 9) for _ in range(int(rng.integers(1, 3)))]
            for _ in range(n)
        ]
        assert bleu(preds, refs) == pytest.approx(bleu_brute(preds, refs), abs=1e-9)


def test_bleu_zero_when_no_unigram_overlap():
    assert bleu([["x"]], [[["y"]]]) == 0.0


def test_bleu_perfect_match_is_100():
    assert bleu([["a", "b", "c", "d"]], [[["a", "b", "c", "d"]]]) == pytest.approx(100.0)


def test_bleu_errors():
    with pytest.raises(MetricError):
        bleu([], [])
    with pytest.raises(MetricError):
        bleu([["a"]], [])
    with pytest.raises(MetricError):
        bleu([["a"]], [[]])


def test_bleu_brevity_penalty_ties_choose_shorter_reference():
    import math

    # n-gram precisions are 1 either way; only the brevity penalty moves.
    # Reference lengths 1 and 3 are both distance 1 from the prediction;
    # the shorter wins the tie, so no penalty applies.
    tied = bleu([["a", "b"]], [[["a", "b", "c"], ["a"]]])
    assert tied == pytest.approx(100.0)
    long_only = bleu([["a", "b"]], [[["a", "b", "c"]]])
    assert long_only == pytest.approx(100.0 * math.exp(1.0 - 3.0 / 2.0))


# -- SARI --------------------------------------------------------------------


def test_sari_hand_value():
    score = sari(["he", "has", "my", "keys"],
                 ["you", "have", "my", "keys"],
                 [["do", "you", "have", "my", "keys"]])
    assert score.sari == pytest.approx(92.22222222222223, abs=1e-9)


def test_sari_matches_oracle_fuzz():
    rng = np.random.default_rng(1)
    for _ in range(200):
        src = _rand_tokens(rng, 1, 8)
        pred = _rand_tokens(rng, 0, 8)
        refs = [_rand_tokens(rng, 1, 8) for _ in range(int(rng.integers(1, 3)))]
        for flag in (False, True):
            got = sari(src, pred, refs, delete_precision_only=flag)
            want, keep, add, dele = sari_brute(
                src, pred, refs, delete_precision_only=flag
            )
            assert got.sari == pytest.approx(want, abs=1e-9)
            assert got.keep_f1 == pytest.approx(keep, abs=1e-9)
            assert got.add_f1 == pytest.approx(add, abs=1e-9)
            assert got.delete_f1 == pytest.approx(dele, abs=1e-9)


def test_sari_identity_copy_with_identity_reference_is_100():
    src = ["a", "b", "c"]
    assert sari(src, src, [src]).sari == pytest.approx(100.0)


def test_sari_delete_precision_flag_changes_score():
    src = ["a", "b", "c", "d"]
    pred = ["a", "b"]
    refs = [["a", "b", "c"]]
    assert sari(src, pred, refs).sari != sari(
        src, pred, refs, delete_precision_only=True
    ).sari


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_bleu_and_sari_are_relabel_invariant(data):
    alphabet = ["a", "b", "c", "d"]
    relabel = {"a": "w", "b": "x", "c": "y", "d": "z"}
    src = data.draw(st.lists(st.sampled_from(alphabet), min_size=1, max_size=6))
    pred = data.draw(st.lists(st.sampled_from(alphabet), min_size=1, max_size=6))
    ref = data.draw(st.lists(st.sampled_from(alphabet), min_size=1, max_size=6))
    mapped = lambda xs: [relabel[x] for x in xs]
    assert bleu([pred], [[ref]]) == pytest.approx(
        bleu([mapped(pred)], [[mapped(ref)]]), abs=1e-12
    )
    assert sari(src, pred, [ref]).sari == pytest.approx(
        sari(mapped(src), mapped(pred), [mapped(ref)]).sari, abs=1e-12
    )


# -- corpus_eval ---------------------------------------------------------------


def _toy_dataset():
    u1 = _utt("a", "tell him he is late", (2, 5), RephraseClass.REPHRASE,
              ["you are late"])
    u2 = _utt("b", "send call mom", (1, 3), RephraseClass.EXACT)
    u3 = _utt("c", "tell him we should meet", (2, 5), RephraseClass.REPHRASE,
              ["should we meet", "we should meet ?"])
    return Dataset([u1, u2, u3])


def test_corpus_eval_report_fields():
    ds = _toy_dataset()
    preds = {
        "a": ["you", "are", "late"],
        "b": ["call", "mom"],
        "c": ["we", "should", "meet"],
    }
    report = corpus_eval(preds, ds)
    assert report.n_exact == 1 and report.n_rephrase == 2
    assert report.em == pytest.approx(100 * 2 / 3)
    assert report.em_any == pytest.approx(100.0)
    assert report.em_exact == pytest.approx(100.0)
    assert report.em_rephrase == pytest.approx(50.0)
    assert 0 < report.bleu <= 100 and 0 < report.sari <= 100
    assert report.sari_breakdown is not None
    payload = json.loads(report.to_json())
    assert payload["em"] == pytest.approx(100 * 2 / 3)
    assert "em_any" in report.to_text()


def test_corpus_eval_missing_ids_error():
    ds = _toy_dataset()
    with pytest.raises(MetricError, match="missing"):
        corpus_eval({"a": ["x"]}, ds)


def test_corpus_eval_empty_class_rates_are_zero():
    u = _utt("a", "tell him he is late", (2, 5), RephraseClass.REPHRASE,
             ["you are late"])
    report = corpus_eval({"a": ["you", "are", "late"]}, Dataset([u]))
    assert report.n_exact == 0 and report.em_exact == 0.0


def test_corpus_eval_corpus_sari_is_mean_of_sentences():
    ds = _toy_dataset()
    preds = {"a": ["you", "are", "late"], "b": ["call", "mom"], "c": ["meet"]}
    report = corpus_eval(preds, ds)
    per = []
    for u in ds:
        src = [t.surface.lower() for t in u.content_tokens]
        refs = [[t.surface.lower() for t in r] for r in u.references()]
        per.append(sari(src, preds[u.id], refs).sari)
    assert report.sari == pytest.approx(float(np.mean(per)))


# -- copy error rate -----------------------------------------------------------


def test_copy_error_rate_counts_missing_proper_nouns():
    u1 = _utt("a", "tell Dave he is late", (1, 5), RephraseClass.REPHRASE,
              ["dave you are late"])
    u2 = _utt("b", "tell Mara she won", (1, 4), RephraseClass.REPHRASE,
              ["mara you won"])
    ds = Dataset([u1, u2])
    # u1 keeps "dave" (case-insensitive), u2 drops "mara"
    preds = {"a": ["Dave", "you", "are", "late"], "b": ["you", "won"]}
    assert copy_error_rate(preds, ds) == pytest.approx(0.5)
    preds_all = {"a": ["dave", "ok"], "b": ["mara", "ok"]}
    assert copy_error_rate(preds_all, ds) == pytest.approx(0.0)
