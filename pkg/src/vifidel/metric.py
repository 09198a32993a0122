"""VIFIDEL scores, reference-consensus penalty weights and score averaging."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from numbers import Real
from typing import Mapping, Optional, Sequence

import numpy as np

from .embeddings import DEFAULT_POLICY, EmbeddingTable, LookupPolicy, lookup
from .exceptions import (
    AlignmentError,
    DomainError,
    EmptyDistributionError,
    NoReferencesError,
)
from .textproc import StopwordSet, WordDistribution, tokenize
from .transport import DEFAULT_COST, CostParams, TransportPlan, solve_pair, word_travel_cost

logger = logging.getLogger(__name__)

EMPTY_ERROR = "error"
EMPTY_ZERO = "zero"


@dataclass
class ReferenceSet:
    """Content words of the human references of one image.

    ``vectors`` holds one ``(len(ref), K)`` matrix per reference once the set
    has been resolved against an embedding table.
    """

    image_id: str
    references: list
    vectors: Optional[list] = None
    dropped: int = 0

    @property
    def size(self):
        return len(self.references)

    @classmethod
    def from_texts(
        cls,
        image_id: str,
        texts: Sequence[str],
        stopwords: StopwordSet,
        table: EmbeddingTable,
        policy: LookupPolicy = DEFAULT_POLICY,
    ) -> "ReferenceSet":
        return cls.from_tokens(
            image_id, [tokenize(t) for t in texts], stopwords, table, policy
        )

    @classmethod
    def from_tokens(cls, image_id, token_lists, stopwords, table, policy=DEFAULT_POLICY):
        refs, vecs = [], []
        dropped = 0
        for tokens in token_lists:
            words, rows = [], []
            for tok in tokens:
                if tok in stopwords:
                    continue
                vec = lookup(table, tok, policy)
                if vec is None:
                    dropped += 1
                    continue
                words.append(tok)
                rows.append(vec)
            if words:
                refs.append(words)
                vecs.append(np.vstack(rows))
        return cls(image_id, refs, vecs, dropped)

    def resolved(self, table=None, policy=DEFAULT_POLICY) -> "ReferenceSet":
        """Same references with vectors attached; unresolvable words and empty references removed."""
        if self.vectors is not None:
            return self
        if table is None:
            raise DomainError("references carry no vectors and no table was given")
        return ReferenceSet.from_tokens(
            self.image_id, self.references, StopwordSet(), table, policy
        )

    def subset(self, n: int) -> "ReferenceSet":
        vecs = None if self.vectors is None else self.vectors[:n]
        return ReferenceSet(self.image_id, self.references[:n], vecs, self.dropped)


@dataclass(frozen=True)
class PenaltyWeights:
    weights: Mapping[str, float]

    def __getitem__(self, token):
        return self.weights[token]

    def __contains__(self, token):
        return token in self.weights

    def __len__(self):
        return len(self.weights)

    @classmethod
    def constant(cls, tokens, value=1.0):
        return cls({t: float(value) for t in tokens})


@dataclass
class ScoreRecord:
    image_id: str
    candidate_id: str
    score: float
    wmd_value: float
    warnings: dict = field(default_factory=dict)
    plan: Optional[TransportPlan] = None

    def to_dict(self, with_plan=False):
        out = {
            "image_id": self.image_id,
            "candidate_id": self.candidate_id,
            "score": self.score,
            "wmd": self.wmd_value if math.isfinite(self.wmd_value) else None,
            "warnings": dict(sorted(self.warnings.items())),
        }
        if with_plan and self.plan is not None:
            out["plan"] = json.loads(self.plan.to_json())
        return out

    def to_json(self, with_plan=False):
        return json.dumps(self.to_dict(with_plan), ensure_ascii=False)


def _unit_rows(X):
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0):
        raise DomainError("cosine undefined for a zero-norm vector")
    return X / norms[:, None]


def penalty_weights(
    image: WordDistribution,
    candidate: WordDistribution,
    refs: ReferenceSet,
    table: Optional[EmbeddingTable] = None,
    policy: LookupPolicy = DEFAULT_POLICY,
) -> PenaltyWeights:
    """Per-word penalty: half the cosine distance to the closest word of each
    reference, averaged over references.

    Defined on the union of image labels and candidate content words. A word
    found verbatim in a reference matches it with similarity exactly 1.
    """
    refs = refs.resolved(table, policy)
    usable = [(w, v) for w, v in zip(refs.references, refs.vectors) if len(w)]
    if not usable:
        raise NoReferencesError(f"no usable references for image {refs.image_id!r}")

    vecs = {}
    for dist in (image, candidate):
        for tok, vec in zip(dist.tokens, dist.vectors):
            vecs.setdefault(tok, vec)
    tokens = sorted(vecs)
    if not tokens:
        return PenaltyWeights({})
    K = _unit_rows(np.vstack([vecs[t] for t in tokens]))

    total = np.zeros(len(tokens))
    for words, R in usable:
        sims = np.clip(K @ _unit_rows(R).T, -1.0, 1.0)
        wordset = set(words)
        for i, tok in enumerate(tokens):
            if tok in wordset:
                sims[i, :] = 1.0
        total += (1.0 - sims.max(axis=1)) / 2.0
    rho = np.clip(total / len(usable), 0.0, 1.0)
    return PenaltyWeights(dict(zip(tokens, rho.tolist())))


def weighted_cost(u, v, rho_u, rho_v, params: CostParams = DEFAULT_COST) -> float:
    """Travel cost between penalty-scaled vectors ``rho_u*u`` and ``rho_v*v``."""
    for r in (rho_u, rho_v):
        if not 0.0 <= r <= 1.0:
            raise DomainError(f"penalty weight {r} outside [0, 1]")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return word_travel_cost(rho_u * u, rho_v * v, params)


def _empty_record(image_id, candidate_id, warnings, policy, what):
    if policy == EMPTY_ZERO:
        warnings = dict(warnings, **{f"empty_{what}": 1})
        return ScoreRecord(image_id, candidate_id, 0.0, math.inf, warnings)
    raise EmptyDistributionError(f"{what} distribution is empty ({image_id!r}, {candidate_id!r})")


def vifidel(
    image: WordDistribution,
    candidate: WordDistribution,
    refs: Optional[ReferenceSet] = None,
    params: CostParams = DEFAULT_COST,
    *,
    table: Optional[EmbeddingTable] = None,
    weights: Optional[PenaltyWeights] = None,
    image_id: str = "",
    candidate_id: str = "",
    empty_policy: str = EMPTY_ERROR,
    keep_plan: bool = False,
) -> ScoreRecord:
    """Score a candidate description against the image's label distribution.

    Without references (or when every reference is empty after filtering) the
    plain travel cost is used; otherwise the costs run between penalty-scaled
    embeddings. ``weights`` overrides the reference-derived penalties.
    """
    if empty_policy not in (EMPTY_ERROR, EMPTY_ZERO):
        raise DomainError(f"unknown empty policy {empty_policy!r}")
    if refs is not None and not image_id:
        image_id = refs.image_id
    warnings = {}
    if image.n_dropped:
        warnings["dropped_image_labels"] = image.n_dropped
    if candidate.n_dropped:
        warnings["dropped_candidate_tokens"] = candidate.n_dropped
    if image.is_empty:
        return _empty_record(image_id, candidate_id, warnings, empty_policy, "image")
    if candidate.is_empty:
        return _empty_record(image_id, candidate_id, warnings, empty_policy, "candidate")

    if weights is None and refs is not None:
        resolved = refs.resolved(table)
        if resolved.dropped:
            warnings["dropped_reference_tokens"] = resolved.dropped
        if resolved.size:
            weights = penalty_weights(image, candidate, resolved)
        else:
            logger.warning("image %r: no usable references, scoring unweighted", image_id)
            warnings["no_usable_references"] = 1

    scale = None
    if weights is not None:
        scale = {}
        for tok in set(image.tokens) | set(candidate.tokens):
            r = weights[tok]
            if not 0.0 <= r <= 1.0:
                raise DomainError(f"penalty weight {r} for {tok!r} outside [0, 1]")
            scale[tok] = r
    plan = solve_pair(image, candidate, params, token_scale=scale)
    return ScoreRecord(
        image_id,
        candidate_id,
        math.exp(-plan.objective),
        plan.objective,
        warnings,
        plan if keep_plan else None,
    )


def wmd_reference_baseline(
    candidate: WordDistribution,
    refs: Sequence[WordDistribution],
    mode: str = "best",
    params: CostParams = DEFAULT_COST,
) -> float:
    """exp(-WMD) against the closest (``best``) or farthest (``worst``) reference."""
    if mode not in ("best", "worst"):
        raise DomainError(f"mode must be 'best' or 'worst', got {mode!r}")
    usable = [r for r in refs if not r.is_empty]
    if not usable:
        raise NoReferencesError("all references are empty")
    if candidate.is_empty:
        raise EmptyDistributionError("candidate distribution is empty")
    sims = [math.exp(-solve_pair(candidate, r, params).objective) for r in usable]
    return max(sims) if mode == "best" else min(sims)


def _key_and_score(item):
    if isinstance(item, Real):
        return None, float(item)
    if isinstance(item, Mapping):
        return (item["image_id"], item["candidate_id"]), float(item["score"])
    return (item.image_id, item.candidate_id), float(item.score)


def combine_scores(a: Sequence, b: Sequence) -> list:
    """Elementwise mean of two aligned score lists.

    Items are plain numbers or records with ``image_id``/``candidate_id``/
    ``score``; records must agree on their ids position by position and the
    result is a list of ``{"image_id", "candidate_id", "score"}`` dicts.
    """
    if len(a) != len(b):
        raise AlignmentError(f"score lists differ in length: {len(a)} vs {len(b)}")
    out = []
    for pos, (x, y) in enumerate(zip(a, b)):
        kx, sx = _key_and_score(x)
        ky, sy = _key_and_score(y)
        if kx != ky:
            raise AlignmentError(f"first mismatch at position {pos}: {kx} vs {ky}")
        mean = (sx + sy) / 2.0
        if kx is None:
            out.append(mean)
        else:
            out.append({"image_id": kx[0], "candidate_id": kx[1], "score": mean})
    return out
