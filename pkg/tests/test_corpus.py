import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rephrasekit.corpus import (
    ChangeCategory,
    Dataset,
    ParseError,
    RephraseClass,
    TsvColumns,
    Utterance,
    ValidationError,
    classify_change,
    compute_stats,
    generate_synthetic,
    is_question_formed,
    load_dataset,
    save_dataset,
    split,
)
from rephrasekit.text import Token, tokenize


def _utt(uid, query, span, cls, rephrases=()):
    return Utterance(
        uid, tuple(tokenize(query)), span, cls,
        tuple(tuple(tokenize(r)) for r in rephrases),
    )


def test_utterance_validation():
    with pytest.raises(ValidationError):
        _utt("u1", "tell him hi", (2, 2), RephraseClass.EXACT)
    with pytest.raises(ValidationError):
        _utt("u1", "tell him hi", (1, 9), RephraseClass.EXACT)
    with pytest.raises(ValidationError):
        _utt("u1", "tell him hi", (2, 3), RephraseClass.REPHRASE)


def test_references_and_gold_target_conventions():
    exact = _utt("e", "tell him hi there", (2, 4), RephraseClass.EXACT, ["hi you"])
    assert [t.surface for t in exact.gold_target()] == ["hi", "there"]
    assert len(exact.references()) == 2
    reph = _utt("r", "tell him he is late", (2, 5), RephraseClass.REPHRASE,
                ["you are late", "is he late"])
    assert [t.surface for t in reph.gold_target()] == ["you", "are", "late"]
    assert len(reph.references()) == 2


def test_dataset_rejects_duplicate_ids():
    u = _utt("dup", "tell him hi", (2, 3), RephraseClass.EXACT)
    v = _utt("dup", "tell her hi", (2, 3), RephraseClass.EXACT)
    with pytest.raises(ValidationError):
        Dataset([u, v])


def test_pairs_are_normalized_content_to_gold():
    u = _utt("p", "tell him He has my Keys.", (2, 6), RephraseClass.REPHRASE,
             ["do you have my keys?"])
    ds = Dataset([u])
    (src, tgt), = ds.pairs(normalized=True)
    assert src == ["he", "has", "my", "keys"]
    assert tgt == ["do", "you", "have", "my", "keys"]


def test_classify_change_table():
    cases = [
        ((["call", "mom"], ["call", "mom"]), ChangeCategory.NONE),
        ((["he", "has", "my", "keys"], ["you", "have", "your", "keys"]),
         ChangeCategory.PRONOUN),
        ((["we", "should", "meet"], ["should", "we", "meet"]),
         ChangeCategory.QUESTION),
        ((["she", "called", "me"], ["did", "she", "call", "you"]),
         ChangeCategory.PRONOUN_AND_QUESTION),
        ((["i", "am", "late"], ["you", "are", "late"]), ChangeCategory.PRONOUN),
    ]
    for (content, reference), want in cases:
        assert classify_change(content, reference) is want, (content, reference)


def test_pronoun_requires_substitution_not_mere_presence():
    got = classify_change(["send", "the", "report"],
                          ["do", "you", "have", "the", "report"])
    assert got is ChangeCategory.QUESTION


def test_is_question_formed():
    assert is_question_formed(["did", "she", "call"])
    assert is_question_formed(["she", "called", "?"])
    assert is_question_formed(["where", "did", "you", "go"])
    assert not is_question_formed(["call", "mom"])
    assert not is_question_formed([])


def test_jsonl_round_trip(tmp_path):
    ds = generate_synthetic(30, seed=9)
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert len(back) == len(ds)
    for a, b in zip(ds, back):
        assert a.id == b.id
        assert a.content_span == b.content_span
        assert a.rephrase_class == b.rephrase_class
        assert [t.surface for t in a.query_tokens] == [t.surface for t in b.query_tokens]
        assert [[t.surface for t in r] for r in a.rephrases] == [
            [t.surface for t in r] for r in b.rephrases
        ]


def test_jsonl_bracket_span_parsing(tmp_path):
    path = tmp_path / "b.jsonl"
    path.write_text(json.dumps({
        "id": "b1", "query": "tell him [ he is late ]", "class": "REPHRASE",
        "rephrases": ["you are late"],
    }) + "\n")
    (u,) = load_dataset(path)
    assert [t.surface for t in u.content_tokens] == ["he", "is", "late"]
    assert u.content_span == (2, 5)


@pytest.mark.parametrize("query", [
    "no span here",
    "two [ spans ] in [ one ] query",
    "empty [ ] span",
])
def test_jsonl_bad_span_raises_with_line_number(tmp_path, query):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "ok", "query": "say [ hi ]"}\n'
                    + json.dumps({"id": "x", "query": query}) + "\n")
    with pytest.raises(ParseError, match="line 2"):
        load_dataset(path)


def test_jsonl_invalid_json_and_missing_query(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json\n")
    with pytest.raises(ParseError, match="line 1"):
        load_dataset(path)
    path.write_text('{"id": "q"}\n')
    with pytest.raises(ParseError, match="missing 'query'"):
        load_dataset(path)


def test_jsonl_unknown_class(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"query": "say [ hi ]", "class": "WAT"}\n')
    with pytest.raises(ParseError, match="unknown class"):
        load_dataset(path)


def test_tsv_columns_parse_and_load(tmp_path):
    cols = TsvColumns.parse("id=0,query=1,class=2,rephrases=3+4")
    assert cols.id == 0 and cols.query == 1
    assert cols.rephrase_class == 2 and cols.rephrases == (3, 4)
    path = tmp_path / "d.tsv"
    path.write_text(
        "t1\tsend [ he is late ]\tREPHRASE\tyou are late\tis he late\n"
        "t2\tsend [ hi there ]\tEXACT\t\n"
    )
    ds = load_dataset(path, fmt="tsv", tsv_columns=cols)
    assert len(ds) == 2
    assert len(ds.utterances[0].rephrases) == 2
    assert ds.utterances[1].rephrase_class is RephraseClass.EXACT


def test_tsv_missing_column_raises(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("only-one-column\n")
    with pytest.raises(ParseError, match="line 1"):
        load_dataset(path, fmt="tsv", tsv_columns=TsvColumns.parse("query=2"))


def test_tsv_requires_columns():
    with pytest.raises(ValueError):
        load_dataset("/dev/null", fmt="tsv")
    with pytest.raises(ValueError):
        TsvColumns.parse("class=1")


def test_split_partitions_and_tags():
    ds = generate_synthetic(100, seed=4)
    train, test, valid = split(ds, (0.8, 0.1, 0.1), seed=1)
    assert (train.split_tag, test.split_tag, valid.split_tag) == ("train", "test", "valid")
    ids = [u.id for u in train] + [u.id for u in test] + [u.id for u in valid]
    assert sorted(ids) == sorted(u.id for u in ds)
    assert (len(train), len(test), len(valid)) == (80, 10, 10)


def test_split_is_deterministic():
    ds = generate_synthetic(50, seed=4)
    a = split(ds, (0.6, 0.2, 0.2), seed=7)
    b = split(ds, (0.6, 0.2, 0.2), seed=7)
    for x, y in zip(a, b):
        assert [u.id for u in x] == [u.id for u in y]


@settings(max_examples=50, deadline=None)
@given(st.integers(10, 60), st.integers(0, 10_000))
def test_split_partition_property(n, seed):
    ds = generate_synthetic(n, seed=0)
    parts = split(ds, (0.5, 0.25, 0.25), seed=seed)
    ids = [u.id for p in parts for u in p]
    assert sorted(ids) == sorted(u.id for u in ds)


def test_split_validates_ratios():
    ds = generate_synthetic(10, seed=0)
    with pytest.raises(ValueError):
        split(ds, (0.5, 0.5, 0.5), seed=0)
    with pytest.raises(ValueError):
        split(ds, (1.0, 0.0, 0.0), seed=0)


def test_compute_stats_hand_case():
    u1 = _utt("s1", "tell him he has my keys", (2, 6), RephraseClass.REPHRASE,
              ["you have your keys"])
    u2 = _utt("s2", "ask him we should meet", (2, 5), RephraseClass.REPHRASE,
              ["should we meet"])
    u3 = _utt("s3", "send hi there", (1, 3), RephraseClass.EXACT)
    stats = compute_stats(Dataset([u1, u2, u3]))
    assert stats.avg_source_len == pytest.approx(3.5)
    assert stats.avg_target_len == pytest.approx(3.5)
    assert stats.avg_keep == pytest.approx(1.5)
    assert stats.avg_add == pytest.approx(2.0)
    assert stats.avg_delete == pytest.approx(2.0)
    assert stats.class_freq[ChangeCategory.NONE] == pytest.approx(1 / 3)
    assert stats.class_freq[ChangeCategory.PRONOUN] == pytest.approx(1 / 3)
    assert stats.class_freq[ChangeCategory.QUESTION] == pytest.approx(1 / 3)
    assert set(stats.to_dict()) >= {"avg_source_len", "class_freq"}
    assert "PRONOUN" in stats.to_text()


def test_compute_stats_errors():
    with pytest.raises(ValueError):
        compute_stats(Dataset([]))
    exact_only = Dataset([_utt("e", "send hi", (1, 2), RephraseClass.EXACT)])
    with pytest.raises(ValueError):
        compute_stats(exact_only)


def test_generate_synthetic_is_deterministic():
    a = generate_synthetic(40, seed=12)
    b = generate_synthetic(40, seed=12)
    assert [u.id for u in a] == [u.id for u in b]
    assert a.pairs(normalized=True) == b.pairs(normalized=True)
    c = generate_synthetic(40, seed=13)
    assert a.pairs() != c.pairs()


def test_generate_synthetic_shape_and_classes():
    ds = generate_synthetic(400, seed=1)
    assert len(ds) == 400
    assert len({u.id for u in ds}) == 400
    n_exact = sum(u.rephrase_class is RephraseClass.EXACT for u in ds)
    assert 0.35 <= n_exact / 400 <= 0.55
    for u in ds:
        if u.rephrase_class is RephraseClass.REPHRASE:
            assert u.rephrases, u.id


def test_generate_synthetic_rephrases_are_classified_changes():
    ds = generate_synthetic(200, seed=2)
    for src, tgt in Dataset(
        [u for u in ds if u.rephrase_class is RephraseClass.REPHRASE]
    ).pairs(normalized=True):
        assert classify_change(src, tgt) is not ChangeCategory.NONE, (src, tgt)


def test_stats_on_synthetic_match_generation_goals():
    stats = compute_stats(generate_synthetic(500, seed=3))
    assert stats.class_freq[ChangeCategory.NONE] >= 0.3
    assert stats.class_freq[ChangeCategory.PRONOUN] > 0
    assert stats.class_freq[ChangeCategory.QUESTION] > 0
    assert stats.class_freq[ChangeCategory.PRONOUN_AND_QUESTION] > 0
