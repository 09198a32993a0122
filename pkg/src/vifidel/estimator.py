"""scikit-learn style estimators wrapping the functional metric API.

``fit`` ingests per-image object labels (and optionally human references);
``predict`` scores ``(image_id, caption)`` pairs. Hyper-parameters are plain
constructor arguments, so ``get_params``/``set_params``/``clone`` work as for
any scikit-learn estimator.
"""
from __future__ import annotations

from collections.abc import Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .embeddings import DEFAULT_POLICY, EmbeddingTable
from .exceptions import DomainError, MissingAssetError
from .imagecontent import ImageContent, build_image_nbow
from .metric import (
    EMPTY_ERROR,
    EMPTY_ZERO,
    ReferenceSet,
    vifidel,
    wmd_reference_baseline,
)
from .textproc import StopwordSet, build_nbow, default_stopwords, tokenize
from .transport import CostParams


def check_embeddings(table) -> EmbeddingTable:
    if not isinstance(table, EmbeddingTable):
        raise DomainError(
            f"embeddings must be an EmbeddingTable, got {type(table).__name__}"
        )
    return table


def check_stopwords(stopwords) -> StopwordSet:
    if stopwords is None:
        return default_stopwords()
    if isinstance(stopwords, StopwordSet):
        return stopwords
    return StopwordSet(stopwords)


def check_images(X) -> dict:
    """Normalise ``{image_id: ImageContent | [labels]}`` or a list of ImageContent."""
    if isinstance(X, Mapping):
        items = X.items()
    else:
        items = []
        for content in X:
            if not isinstance(content, ImageContent):
                raise DomainError("a sequence of images must hold ImageContent objects")
            items.append((content.image_id, content))
    out = {}
    for image_id, content in items:
        if not isinstance(content, ImageContent):
            if isinstance(content, str):
                raise DomainError(f"labels for {image_id!r} must be a list, not a string")
            content = ImageContent.from_labels(str(image_id), list(content))
        out[str(image_id)] = content
    return out


def check_pairs(X) -> list:
    """Normalise candidate inputs to ``[(image_id, candidate_id, caption)]``.

    Accepts 2-tuples ``(image_id, caption)`` (candidate id = position),
    3-tuples ``(image_id, candidate_id, caption)`` or dicts with the keys
    ``image_id``, ``caption`` and optionally ``candidate_id``.
    """
    out = []
    for pos, row in enumerate(X):
        if isinstance(row, Mapping):
            try:
                image_id, caption = row["image_id"], row["caption"]
            except KeyError as exc:
                raise DomainError(f"row {pos}: missing key {exc}") from None
            cand = row.get("candidate_id", str(pos))
        elif isinstance(row, (tuple, list)) and len(row) == 2:
            (image_id, caption), cand = row, str(pos)
        elif isinstance(row, (tuple, list)) and len(row) == 3:
            image_id, cand, caption = row
        else:
            raise DomainError(f"row {pos}: expected (image_id, caption) pair, got {row!r}")
        if not isinstance(caption, str):
            raise DomainError(f"row {pos}: caption must be a string")
        out.append((str(image_id), str(cand), caption))
    return out


class VifidelScorer(BaseEstimator):
    """Visual-fidelity scorer: exp(-WMD) between image labels and a caption.

    Parameters
    ----------
    embeddings : EmbeddingTable
        Word vectors shared by labels, captions and references.
    stopwords : iterable of str, optional
        Defaults to the bundled English list.
    p : float, default=2.0
        Exponent of the Euclidean travel cost.
    binarize : bool, default=False
        Use label presence instead of label frequency for the image side.
    n_refs : int, optional
        Use only the first ``n_refs`` references per image; ``None`` uses all,
        ``0`` disables reference weighting.
    empty_policy : {"error", "zero"}, default="error"
        What to do when the image or caption has no content words.
    lookup_policy : LookupPolicy, optional
    """

    def __init__(
        self,
        embeddings=None,
        stopwords=None,
        p=2.0,
        binarize=False,
        n_refs=None,
        empty_policy=EMPTY_ERROR,
        lookup_policy=None,
    ):
        self.embeddings = embeddings
        self.stopwords = stopwords
        self.p = p
        self.binarize = binarize
        self.n_refs = n_refs
        self.empty_policy = empty_policy
        self.lookup_policy = lookup_policy

    def _validate_params(self):
        if self.empty_policy not in (EMPTY_ERROR, EMPTY_ZERO):
            raise DomainError(f"empty_policy must be 'error' or 'zero', got {self.empty_policy!r}")
        if self.n_refs is not None and self.n_refs < 0:
            raise DomainError("n_refs must be nonnegative")
        return CostParams(float(self.p))

    def fit(self, X, y=None, references=None):
        """Build the label distribution of every image.

        ``X`` maps image ids to :class:`ImageContent` or plain label lists;
        ``references`` maps image ids to lists of reference sentences.
        """
        self.cost_params_ = self._validate_params()
        self.table_ = check_embeddings(self.embeddings)
        self.stopwords_ = check_stopwords(self.stopwords)
        self.policy_ = self.lookup_policy or DEFAULT_POLICY
        images = check_images(X)
        self.image_distributions_ = {
            image_id: build_image_nbow(content, self.binarize, self.table_, self.policy_)
            for image_id, content in images.items()
        }
        self.references_ = {}
        for image_id, texts in (references or {}).items():
            if isinstance(texts, str):
                raise DomainError(f"references for {image_id!r} must be a list of strings")
            if self.n_refs is not None:
                texts = list(texts)[: self.n_refs]
            self.references_[str(image_id)] = self._reference_set(str(image_id), texts)
        self._ref_cache = {}
        return self

    def _reference_set(self, image_id, texts):
        return ReferenceSet.from_texts(
            image_id, list(texts), self.stopwords_, self.table_, self.policy_
        )

    def image_distribution(self, image_id):
        check_is_fitted(self, "image_distributions_")
        try:
            return self.image_distributions_[image_id]
        except KeyError:
            raise MissingAssetError(f"no object labels for image {image_id!r}") from None

    def caption_distribution(self, caption):
        check_is_fitted(self, "table_")
        return build_nbow(tokenize(caption), self.stopwords_, self.table_, self.policy_)

    def score_record(self, image_id, caption, candidate_id="", references=None, keep_plan=False):
        """Score one caption; ``references`` (list of sentences) overrides the fitted ones."""
        image = self.image_distribution(image_id)
        if references is None:
            refs = self.references_.get(image_id)
        elif not references:
            refs = None
        else:
            key = (image_id, tuple(references))
            refs = self._ref_cache.get(key)
            if refs is None:
                refs = self._ref_cache[key] = self._reference_set(image_id, references)
        return vifidel(
            image,
            self.caption_distribution(caption),
            refs,
            self.cost_params_,
            image_id=image_id,
            candidate_id=candidate_id,
            empty_policy=self.empty_policy,
            keep_plan=keep_plan,
        )

    def score_caption(self, image_id, caption, references=None) -> float:
        return self.score_record(image_id, caption, references=references).score

    def score_records(self, X, keep_plan=False) -> list:
        check_is_fitted(self, "image_distributions_")
        return [
            self.score_record(image_id, caption, cand, keep_plan=keep_plan)
            for image_id, cand, caption in check_pairs(X)
        ]

    def predict(self, X) -> np.ndarray:
        return np.array([r.score for r in self.score_records(X)], dtype=np.float64)

    def transform(self, X) -> np.ndarray:
        return self.predict(X).reshape(-1, 1)

    def fit_transform(self, X, y=None, references=None, pairs=None):
        """Fit on images ``X`` and score ``pairs`` in one call."""
        self.fit(X, y, references=references)
        return self.transform(pairs if pairs is not None else [])


class WMDReferenceScorer(BaseEstimator):
    """Reference-only baseline: exp(-WMD) to the closest or farthest reference."""

    def __init__(self, embeddings=None, stopwords=None, p=2.0, mode="best", n_refs=None,
                 lookup_policy=None):
        self.embeddings = embeddings
        self.stopwords = stopwords
        self.p = p
        self.mode = mode
        self.n_refs = n_refs
        self.lookup_policy = lookup_policy

    def fit(self, X, y=None):
        """``X`` maps image ids to lists of reference sentences."""
        if self.mode not in ("best", "worst"):
            raise DomainError(f"mode must be 'best' or 'worst', got {self.mode!r}")
        self.cost_params_ = CostParams(float(self.p))
        self.table_ = check_embeddings(self.embeddings)
        self.stopwords_ = check_stopwords(self.stopwords)
        self.policy_ = self.lookup_policy or DEFAULT_POLICY
        self.references_ = {}
        for image_id, texts in X.items():
            texts = list(texts)
            if self.n_refs is not None:
                texts = texts[: self.n_refs]
            self.references_[str(image_id)] = texts
        return self

    def _nbow(self, text):
        return build_nbow(tokenize(text), self.stopwords_, self.table_, self.policy_)

    def score_caption(self, image_id, caption, references=None) -> float:
        check_is_fitted(self, "references_")
        if references is None:
            if image_id not in self.references_:
                raise MissingAssetError(f"no references for image {image_id!r}")
            references = self.references_[image_id]
        refs = [self._nbow(r) for r in references]
        return wmd_reference_baseline(self._nbow(caption), refs, self.mode, self.cost_params_)

    def predict(self, X) -> np.ndarray:
        return np.array(
            [self.score_caption(i, c) for i, _, c in check_pairs(X)], dtype=np.float64
        )

    def transform(self, X) -> np.ndarray:
        return self.predict(X).reshape(-1, 1)
