"""Tokenisation and normalised bag-of-words construction."""
from __future__ import annotations

import string
from collections import Counter
from importlib import resources
from typing import Iterable, Mapping

import numpy as np

from .embeddings import DEFAULT_POLICY, EmbeddingTable, LookupPolicy, lookup

_PUNCT = string.punctuation + "‘’“”–—…"


class StopwordSet(frozenset):
    """Lowercased stopwords; membership is tested on lowercased tokens."""

    def __new__(cls, tokens: Iterable[str] = ()):
        return super().__new__(cls, (t.strip().lower() for t in tokens if t.strip()))

    def __contains__(self, token):
        return super().__contains__(token.lower())


def read_stopwords(path) -> StopwordSet:
    """Read a UTF-8 stopword file: one token per line, ``#`` starts a comment."""
    with open(path, encoding="utf-8") as fh:
        return StopwordSet(_stopword_lines(fh))


def default_stopwords() -> StopwordSet:
    text = resources.files("vifidel").joinpath("data/stopwords_en.txt").read_text("utf-8")
    return StopwordSet(_stopword_lines(text.splitlines()))


def _stopword_lines(lines):
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def tokenize(text: str) -> list:
    """Lowercase, split on whitespace and strip surrounding punctuation.

    >>> tokenize("Wine-glass!")
    ['wine-glass']
    """
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


class WordDistribution:
    """Normalised bag of words whose tokens all carry an embedding vector.

    Tokens are kept in lexicographic order. ``dropped`` counts tokens that
    had no resolvable embedding and therefore carry no mass.
    """

    __slots__ = ("tokens", "weights", "vectors", "dropped")

    def __init__(self, tokens, weights, vectors, dropped=None):
        self.tokens = tuple(tokens)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.vectors = np.asarray(vectors, dtype=np.float64)
        self.dropped = dict(dropped or {})

    @classmethod
    def empty(cls, dimension=1, dropped=None):
        return cls((), np.zeros(0), np.zeros((0, dimension)), dropped)

    @classmethod
    def from_counts(
        cls,
        counts: Mapping[str, float],
        table: EmbeddingTable,
        policy: LookupPolicy = DEFAULT_POLICY,
    ) -> "WordDistribution":
        """Normalise nonnegative ``counts``; tokens without a vector are dropped."""
        kept = {}
        vecs = {}
        dropped = {}
        for tok, n in counts.items():
            if n <= 0:
                continue
            vec = lookup(table, tok, policy)
            if vec is None:
                dropped[tok] = dropped.get(tok, 0) + n
                continue
            kept[tok] = n
            vecs[tok] = vec
        if not kept:
            return cls.empty(table.dimension, dropped)
        tokens = sorted(kept)
        total = float(sum(kept.values()))
        weights = np.array([kept[t] / total for t in tokens])
        vectors = np.vstack([vecs[t] for t in tokens])
        return cls(tokens, weights, vectors, dropped)

    def __len__(self):
        return len(self.tokens)

    def __bool__(self):
        return len(self.tokens) > 0

    @property
    def is_empty(self):
        return not self.tokens

    @property
    def n_dropped(self):
        return int(sum(self.dropped.values()))

    def as_dict(self) -> dict:
        return dict(zip(self.tokens, self.weights.tolist()))

    def vector(self, token):
        return self.vectors[self.tokens.index(token)]

    def __eq__(self, other):
        if not isinstance(other, WordDistribution):
            return NotImplemented
        return (
            self.tokens == other.tokens
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.vectors, other.vectors)
        )

    def __repr__(self):
        body = ", ".join(f"{t}: {w:.4g}" for t, w in zip(self.tokens, self.weights))
        return f"WordDistribution({{{body}}})"


def build_nbow(
    tokens: Iterable[str],
    stopwords: StopwordSet,
    table: EmbeddingTable,
    policy: LookupPolicy = DEFAULT_POLICY,
) -> WordDistribution:
    counts = Counter(t for t in tokens if t not in stopwords)
    return WordDistribution.from_counts(counts, table, policy)


def content_words(tokens, stopwords, table, policy=DEFAULT_POLICY) -> list:
    """Tokens that survive stopword removal and have an embedding, in order."""
    return [
        t for t in tokens if t not in stopwords and lookup(table, t, policy) is not None
    ]
