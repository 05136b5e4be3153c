import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lcs_kept_brute
from rephrasekit.editops import (
    NOT_COVERED,
    EditAction,
    EditTag,
    PhraseVocabulary,
    TagSequence,
    align,
    coverage,
    extract_phrases,
    realize,
    to_tags,
)
from rephrasekit.kernels import get_backend


def _random_pair(rng, alphabet=6, max_len=8):
    n, m = rng.integers(0, max_len + 1, size=2)
    a = [f"w{int(x)}" for x in rng.integers(0, alphabet, size=n)]
    b = [f"w{int(x)}" for x in rng.integers(0, alphabet, size=m)]
    return a, b


def test_align_matches_brute_force_lcs():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a, b = _random_pair(rng)
        got = align(a, b)
        want = lcs_kept_brute(a, b)
        assert list(got.kept) == want, (a, b)


def test_kernel_backends_agree_on_lcs():
    numpy_k = get_backend("numpy").lcs_kept
    compiled_k = get_backend("compiled").lcs_kept
    rng = np.random.default_rng(1)
    for _ in range(200):
        n, m = rng.integers(0, 12, size=2)
        a = rng.integers(0, 5, size=n).astype(np.int64)
        b = rng.integers(0, 5, size=m).astype(np.int64)
        assert list(map(tuple, numpy_k(a, b))) == list(map(tuple, compiled_k(a, b)))


def test_align_partitions_indices():
    rng = np.random.default_rng(2)
    for _ in range(200):
        a, b = _random_pair(rng)
        al = align(a, b)
        kept_src = [i for i, _ in al.kept]
        kept_tgt = [j for _, j in al.kept]
        assert kept_src == sorted(kept_src) and kept_tgt == sorted(kept_tgt)
        assert sorted(kept_src + list(al.deleted)) == list(range(len(a)))
        assert sorted(kept_tgt + list(al.added)) == list(range(len(b)))
        for i, j in al.kept:
            assert a[i] == b[j]


def test_to_tags_hand_case_groups_contiguous_inserts():
    tags = to_tags(["send", "the", "report"], ["do", "you", "have", "the", "report"])
    assert len(tags) == 4
    assert tags.tags[0] == EditTag(EditAction.DELETE, None)
    assert tags.tags[1] == EditTag(EditAction.KEEP, ("do", "you", "have"))
    assert tags.tags[2] == EditTag(EditAction.KEEP, None)
    assert tags.tags[3] == EditTag(EditAction.KEEP, None)


def test_to_tags_trailing_insert_uses_final_slot():
    tags = to_tags(["call", "mom"], ["call", "mom", "now"])
    assert tags.tags[2] == EditTag(EditAction.KEEP, ("now",))


def test_tag_sequence_rejects_delete_in_final_slot():
    with pytest.raises(ValueError):
        TagSequence((EditTag(EditAction.KEEP, None), EditTag(EditAction.DELETE, None)))


def test_realize_round_trips_random_pairs():
    rng = np.random.default_rng(3)
    for _ in range(400):
        a, b = _random_pair(rng)
        assert realize(a, to_tags(a, b)) == b


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=7),
    st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=7),
)
def test_realize_round_trip_property(a, b):
    assert realize(a, to_tags(a, b)) == b


def test_realize_checks_tag_length():
    with pytest.raises(ValueError):
        realize(["a", "b"], TagSequence((EditTag(EditAction.KEEP, None),)))


def test_to_tags_not_covered_sentinel():
    vocab = PhraseVocabulary(phrases=(("now",),), frequencies=(1,))
    ok = to_tags(["call", "mom"], ["call", "mom", "now"], vocab)
    assert isinstance(ok, TagSequence)
    missing = to_tags(["call", "mom"], ["call", "mom", "later"], vocab)
    assert missing is NOT_COVERED
    assert repr(NOT_COVERED) == "NOT_COVERED"


def test_extract_phrases_orders_by_frequency_then_lexicographic():
    pairs = [
        (["x"], ["b", "x"]),
        (["x"], ["b", "x"]),
        (["x"], ["a", "x"]),
        (["x"], ["c", "x"]),
        (["x"], ["a", "x"]),
    ]
    vocab = extract_phrases(pairs)
    assert vocab.phrases == (("a",), ("b",), ("c",))
    assert vocab.frequencies == (2, 2, 1)


def test_extract_phrases_rejects_empty_input():
    with pytest.raises(ValueError):
        extract_phrases([])


def test_coverage_fraction():
    pairs = [
        (["call", "mom"], ["call", "mom", "now"]),
        (["call", "mom"], ["call", "mom", "later"]),
    ]
    vocab = PhraseVocabulary(phrases=(("now",),), frequencies=(1,))
    assert coverage(pairs, vocab) == 0.5


def test_phrase_vocabulary_validation():
    with pytest.raises(ValueError):
        PhraseVocabulary(phrases=(("a",), ("a",)), frequencies=(2, 1))
    with pytest.raises(ValueError):
        PhraseVocabulary(phrases=(("a",), ("b",)), frequencies=(1, 2))
    with pytest.raises(ValueError):
        PhraseVocabulary(phrases=(("a",),), frequencies=(1, 2))


def test_phrase_vocabulary_lookup():
    vocab = PhraseVocabulary(phrases=(("a",), ("b", "c")), frequencies=(3, 1))
    assert ("b", "c") in vocab and ("z",) not in vocab
    assert vocab.index_of(("b", "c")) == 1
    assert len(vocab) == 2
