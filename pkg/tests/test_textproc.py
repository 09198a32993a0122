import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vifidel.embeddings import LookupPolicy
from vifidel.exceptions import EmbeddingLookupError
from vifidel.textproc import (
    StopwordSet,
    build_nbow,
    default_stopwords,
    read_stopwords,
    tokenize,
)

from conftest import TOY_TABLE, TOY_VECTORS


@pytest.mark.parametrize(
    "text, expected",
    [
        ("A dog plays with the toys.", ["a", "dog", "plays", "with", "the", "toys"]),
        ("", []),
        ("Wine-glass!", ["wine-glass"]),
        ("  ... -- !!", []),
        ('"Hello," she said.', ["hello", "she", "said"]),
    ],
)
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_build_nbow_removes_stopwords(toy_table):
    dist = build_nbow(
        ["a", "dog", "plays", "with", "the", "toys"], StopwordSet(["a", "with", "the"]), toy_table
    )
    assert dist.as_dict() == {"dog": 1 / 3, "plays": 1 / 3, "toys": 1 / 3}


def test_build_nbow_all_stopwords_is_empty(toy_table):
    dist = build_nbow(["the", "a"], StopwordSet(["the", "a"]), toy_table)
    assert dist.is_empty
    assert len(dist) == 0


def test_build_nbow_frequencies(toy_table):
    dist = build_nbow(["dog", "dog", "cat"], StopwordSet(), toy_table)
    assert dist.as_dict() == {"cat": 1 / 3, "dog": 2 / 3}


def test_build_nbow_drops_oov_and_counts(toy_table):
    dist = build_nbow(["dog", "zyzzyva", "zyzzyva"], StopwordSet(), toy_table)
    assert dist.as_dict() == {"dog": 1.0}
    assert dist.dropped == {"zyzzyva": 2}
    assert dist.n_dropped == 2


def test_build_nbow_oov_error_policy(toy_table):
    with pytest.raises(EmbeddingLookupError):
        build_nbow(["zyzzyva"], StopwordSet(), toy_table, LookupPolicy(oov_behavior="error"))


def test_stopword_membership_case_insensitive():
    s = StopwordSet(["The"])
    assert "the" in s and "THE" in s


def test_stopword_file(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("# comment\nthe\n\nA  # trailing\n", encoding="utf-8")
    assert read_stopwords(p) == StopwordSet(["the", "a"])


def test_default_stopwords():
    s = default_stopwords()
    assert 140 <= len(s) <= 170
    assert "the" in s and "dog" not in s


words = st.lists(st.sampled_from(sorted(TOY_VECTORS) + ["the", "a", "zzz"]), max_size=12)


@settings(max_examples=100, deadline=None)
@given(words, st.randoms(use_true_random=False))
def test_nbow_order_and_repetition_invariance(tokens, rnd):
    toy_table = TOY_TABLE
    stop = StopwordSet(["the", "a"])
    base = build_nbow(tokens, stop, toy_table)
    shuffled = list(tokens)
    rnd.shuffle(shuffled)
    assert build_nbow(shuffled, stop, toy_table) == base
    assert build_nbow(tokens + tokens, stop, toy_table) == base
    if not base.is_empty:
        assert abs(math.fsum(base.weights) - 1.0) <= 1e-12
        assert all(w > 0 for w in base.weights)
