"""Word-embedding tables in word2vec text/binary layout, plus lookup and cosine."""
from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .exceptions import (
    DomainError,
    EmbeddingFormatError,
    EmbeddingLookupError,
    EmbeddingParseError,
)

logger = logging.getLogger(__name__)

JOIN_UNDERSCORE = "underscore"
JOIN_AVERAGE = "average"
OOV_DROP = "drop"
OOV_ERROR = "error"

_MULTIWORD_SPLIT = re.compile(r"[\s\-]+")


class EmbeddingTable:
    """Immutable vocabulary of ``K``-dimensional word vectors.

    Parameters
    ----------
    words : iterable of str
        Tokens, one per row of ``vectors``. Duplicates keep their first row.
    vectors : array-like, shape (n_words, K)
        Embedding matrix. Stored as read-only float64.
    """

    __slots__ = ("_vocab", "_words", "_vectors")

    def __init__(self, words: Iterable[str], vectors):
        words = list(words)
        vectors = np.array(vectors, dtype=np.float64, ndmin=2, copy=True)
        if vectors.ndim != 2:
            raise EmbeddingFormatError("vectors must be a 2-d matrix")
        if len(words) != vectors.shape[0]:
            raise EmbeddingFormatError(
                f"{len(words)} words but {vectors.shape[0]} vectors"
            )
        if vectors.shape[1] <= 0:
            raise EmbeddingFormatError("embedding dimension must be positive")
        if not np.all(np.isfinite(vectors)):
            raise EmbeddingFormatError("embedding vectors contain non-finite values")

        vocab: dict[str, int] = {}
        keep = []
        for row, word in enumerate(words):
            if word in vocab:
                continue
            vocab[word] = len(keep)
            keep.append(row)
        if len(keep) != len(words):
            vectors = vectors[keep]
        vectors.setflags(write=False)
        self._vocab = vocab
        self._words = tuple(vocab)
        self._vectors = vectors

    @classmethod
    def from_dict(cls, mapping: Mapping[str, Iterable[float]]) -> "EmbeddingTable":
        words = list(mapping)
        if not words:
            raise EmbeddingFormatError("cannot build an empty embedding table")
        return cls(words, [list(mapping[w]) for w in words])

    @property
    def dimension(self) -> int:
        return self._vectors.shape[1]

    @property
    def vocabulary(self) -> Mapping[str, int]:
        return self._vocab

    @property
    def words(self) -> tuple:
        return self._words

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def __len__(self):
        return len(self._words)

    def __contains__(self, word):
        return word in self._vocab

    def __getitem__(self, word) -> np.ndarray:
        return self._vectors[self._vocab[word]]

    def get(self, word, default=None):
        idx = self._vocab.get(word)
        return default if idx is None else self._vectors[idx]

    def __eq__(self, other):
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return self._words == other._words and np.array_equal(
            self._vectors, other._vectors
        )

    def __repr__(self):
        return f"EmbeddingTable(n_words={len(self)}, dimension={self.dimension})"


@dataclass(frozen=True)
class LookupPolicy:
    """How tokens that are not verbatim in the vocabulary get resolved.

    ``multiword_join`` is tried in order for labels such as ``"dining-table"``:
    ``"underscore"`` looks up ``dining_table``, ``"average"`` takes the mean of
    the per-token vectors that exist.
    """

    lowercase: bool = True
    multiword_join: tuple = (JOIN_UNDERSCORE, JOIN_AVERAGE)
    oov_behavior: str = OOV_DROP

    def __post_init__(self):
        joins = tuple(self.multiword_join)
        if not joins:
            raise DomainError("LookupPolicy needs at least one join strategy")
        for j in joins:
            if j not in (JOIN_UNDERSCORE, JOIN_AVERAGE):
                raise DomainError(f"unknown join strategy {j!r}")
        if self.oov_behavior not in (OOV_DROP, OOV_ERROR):
            raise DomainError(f"unknown oov_behavior {self.oov_behavior!r}")
        object.__setattr__(self, "multiword_join", joins)


DEFAULT_POLICY = LookupPolicy()


def _direct(table, token, lowercase):
    vec = table.get(token)
    if vec is None and lowercase:
        lowered = token.lower()
        if lowered != token:
            vec = table.get(lowered)
    return vec


def lookup(table: EmbeddingTable, token: str, policy: LookupPolicy = DEFAULT_POLICY):
    """Resolve ``token`` to a vector, or ``None`` when it is out of vocabulary.

    Tries the exact token, then its lowercased form, then (for labels made of
    several space/hyphen separated parts) the join strategies of ``policy``.
    """
    if not token:
        raise DomainError("cannot look up an empty token")
    vec = _direct(table, token, policy.lowercase)
    if vec is not None:
        return vec

    parts = [p for p in _MULTIWORD_SPLIT.split(token.strip()) if p]
    if len(parts) > 1:
        for strategy in policy.multiword_join:
            if strategy == JOIN_UNDERSCORE:
                vec = _direct(table, "_".join(parts), policy.lowercase)
                if vec is not None:
                    return vec
            else:
                found = [_direct(table, p, policy.lowercase) for p in parts]
                found = [v for v in found if v is not None]
                if found:
                    return np.mean(found, axis=0)

    if policy.oov_behavior == OOV_ERROR:
        raise EmbeddingLookupError(token)
    logger.debug("no embedding for %r; dropped", token)
    return None


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DomainError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DomainError("cosine undefined for a zero-norm vector")
    return float(min(1.0, max(-1.0, np.dot(u, v) / (nu * nv))))


# ---------------------------------------------------------------------------
# word2vec file formats


def _parse_header(line):
    parts = line.split()
    if len(parts) != 2:
        return None
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        return None


def load_text_embeddings(path, limit=None) -> EmbeddingTable:
    """Read a word2vec text file; the ``"<count> <dim>"`` header is optional."""
    words = []
    rows = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if lineno == 1:
                header = _parse_header(line)
                if header is not None:
                    count, dim = header
                    if count <= 0 or dim <= 0:
                        raise EmbeddingFormatError(
                            f"nonpositive count/dim in header: {line!r}"
                        )
                    continue
            parts = line.split()
            if dim is None:
                dim = len(parts) - 1
                if dim <= 0:
                    raise EmbeddingParseError("entry has no vector components", lineno)
            if len(parts) - 1 != dim:
                raise EmbeddingParseError(
                    f"expected {dim} components, found {len(parts) - 1}", lineno
                )
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise EmbeddingParseError(str(exc), lineno) from None
            words.append(parts[0])
            rows.append(vec)
            if limit is not None and len(words) >= limit:
                break
    if not words:
        raise EmbeddingFormatError(f"{path}: no embeddings found")
    try:
        return EmbeddingTable(words, np.array(rows, dtype=np.float64))
    except EmbeddingFormatError as exc:
        raise EmbeddingFormatError(f"{path}: {exc}") from None


def load_binary_embeddings(path, limit=None) -> EmbeddingTable:
    """Read the word2vec binary layout (little-endian float32 vectors)."""
    with open(path, "rb") as fh:
        data = fh.read()
    nl = data.find(b"\n")
    if nl < 0:
        raise EmbeddingFormatError(f"{path}: missing header line")
    header = _parse_header(data[:nl].decode("ascii", errors="replace"))
    if header is None:
        raise EmbeddingFormatError(f"{path}: bad header {data[:nl][:80]!r}")
    count, dim = header
    if count <= 0 or dim <= 0:
        raise EmbeddingFormatError(f"{path}: nonpositive count/dim in header")
    if limit is not None:
        count = min(count, limit)

    vec_bytes = 4 * dim
    vectors = np.empty((count, dim), dtype=np.float64)
    words = []
    pos = nl + 1
    size = len(data)
    for i in range(count):
        while pos < size and data[pos] in b"\n\r":
            pos += 1
        end = data.find(b" ", pos)
        if end < 0:
            raise EmbeddingFormatError(f"{path}: truncated at entry {i + 1} of {count}")
        token = data[pos:end].decode("utf-8", errors="replace")
        if not token:
            raise EmbeddingFormatError(f"{path}: empty token at entry {i + 1}")
        start = end + 1
        if start + vec_bytes > size:
            raise EmbeddingFormatError(f"{path}: truncated at entry {i + 1} of {count}")
        vectors[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=start)
        words.append(token)
        pos = start + vec_bytes
    try:
        return EmbeddingTable(words, vectors)
    except EmbeddingFormatError as exc:
        raise EmbeddingFormatError(f"{path}: {exc}") from None


def save_binary_embeddings(table: EmbeddingTable, path) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{len(table)} {table.dimension}\n".encode("ascii"))
        vecs = table.vectors.astype("<f4")
        for word, vec in zip(table.words, vecs):
            fh.write(word.encode("utf-8") + b" ")
            fh.write(vec.tobytes())
            fh.write(b"\n")


def save_text_embeddings(table: EmbeddingTable, path, header=True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table)} {table.dimension}\n")
        for word, vec in zip(table.words, table.vectors):
            fh.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def sniff_format(path) -> str:
    """Return ``"binary"`` or ``"text"`` for a word2vec file."""
    with open(path, "rb") as fh:
        head = fh.read(1 << 16)
    nl = head.find(b"\n")
    if nl < 0:
        return "text"
    try:
        header = _parse_header(head[:nl].decode("ascii"))
    except UnicodeDecodeError:
        return "text"
    if header is None:
        return "text"
    _, dim = header
    rest = head[nl + 1 :]
    line_end = rest.find(b"\n")
    first = rest if line_end < 0 else rest[:line_end]
    try:
        parts = first.decode("utf-8").split()
    except UnicodeDecodeError:
        return "binary"
    if len(parts) == dim + 1:
        try:
            [float(x) for x in parts[1:]]
            return "text"
        except ValueError:
            pass
    return "binary"


def load_embeddings(path, fmt="auto", limit=None) -> EmbeddingTable:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    if fmt == "auto":
        fmt = sniff_format(path)
    if fmt == "text":
        return load_text_embeddings(path, limit=limit)
    if fmt == "binary":
        return load_binary_embeddings(path, limit=limit)
    raise DomainError(f"unknown embedding format {fmt!r}")
