"""Forced-choice accuracy and rank correlation against human judgments."""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import AlignmentError, DataFormatError, DomainError, VifidelError

SPLITS = ("HC", "HI", "HM", "MM")
LABELS = ("B", "C")
TIE = "tie"


@dataclass(frozen=True)
class ForcedChoiceItem:
    image_id: str
    caption_b: str
    caption_c: str
    human_label: str
    split: str = "MM"

    def __post_init__(self):
        if not self.caption_b or not self.caption_c:
            raise DomainError("forced-choice captions must be nonempty")
        if self.human_label not in LABELS:
            raise DomainError(f"human label must be B or C, got {self.human_label!r}")
        if self.split not in SPLITS:
            raise DomainError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class JudgmentItem:
    image_id: str
    candidate: str
    relevance: float
    thoroughness: float

    def __post_init__(self):
        for name in ("relevance", "thoroughness"):
            v = getattr(self, name)
            if not 1.0 <= v <= 5.0:
                raise DomainError(f"{name} {v} outside [1, 5]")


def majority_vote(labels: Sequence[str]) -> str:
    if not labels:
        raise DomainError("majority vote of an empty list")
    counts = Counter(labels)
    unknown = set(counts) - set(LABELS)
    if unknown:
        raise DomainError(f"unknown labels {sorted(unknown)}")
    if counts["B"] == counts["C"]:
        return TIE
    return "B" if counts["B"] > counts["C"] else "C"


@dataclass
class AccuracyReport:
    """Per-split accuracies plus the overall mean over all scored items."""

    per_split: dict
    overall: float
    counts: dict
    skipped: list = field(default_factory=list)

    def __getitem__(self, split):
        return self.overall if split == "all" else self.per_split[split]


def _pick_references(refs, n_refs, rng):
    if n_refs == 0:
        return []
    if rng is None:
        return list(refs[:n_refs])
    if n_refs >= len(refs):
        return list(refs)
    picked = sorted(rng.sample(range(len(refs)), n_refs))
    return [refs[i] for i in picked]


def forced_choice_accuracy(
    items: Iterable[ForcedChoiceItem],
    scorer: Callable,
    n_refs: int = 0,
    references: Optional[Mapping[str, Sequence[str]]] = None,
    seed: Optional[int] = None,
) -> AccuracyReport:
    """Fraction of items where the higher-scored caption matches the human label.

    ``scorer(image_id, caption, refs)`` returns a similarity; ``refs`` is the
    first ``n_refs`` references of the image in file order, or a seeded random
    subset of that size when ``seed`` is given. Equal scores count as half
    correct. Items whose scorer raises a :class:`VifidelError` (e.g. missing
    detections) are skipped and listed in ``skipped``.
    """
    if n_refs < 0:
        raise DomainError("n_refs must be nonnegative")
    rng = None if seed is None else random.Random(seed)
    hits = {s: 0.0 for s in SPLITS}
    counts = {s: 0 for s in SPLITS}
    skipped = []
    for idx, item in enumerate(items):
        refs = []
        if n_refs:
            available = (references or {}).get(item.image_id)
            if available is None:
                skipped.append((idx, item.image_id, "missing references"))
                continue
            if len(available) < n_refs:
                skipped.append((idx, item.image_id, f"only {len(available)} references"))
                continue
            refs = _pick_references(available, n_refs, rng)
        try:
            sb = scorer(item.image_id, item.caption_b, refs)
            sc = scorer(item.image_id, item.caption_c, refs)
        except (VifidelError, KeyError) as exc:
            skipped.append((idx, item.image_id, str(exc)))
            continue
        if sb == sc:
            credit = 0.5
        else:
            credit = 1.0 if ("B" if sb > sc else "C") == item.human_label else 0.0
        hits[item.split] += credit
        counts[item.split] += 1
    per_split = {s: (hits[s] / counts[s] if counts[s] else float("nan")) for s in SPLITS}
    n = sum(counts.values())
    overall = sum(hits.values()) / n if n else float("nan")
    return AccuracyReport(per_split, overall, counts, skipped)


def average_ranks(values) -> np.ndarray:
    """1-based ranks; tied values share the mean of the positions they span."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sorted_x = x[order]
    start = 0
    n = len(x)
    while start < n:
        stop = start + 1
        while stop < n and sorted_x[stop] == sorted_x[start]:
            stop += 1
        ranks[order[start:stop]] = (start + stop + 1) / 2.0
        start = stop
    return ranks


def spearman(xs, ys) -> float:
    """Spearman correlation as the Pearson correlation of average ranks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise DomainError(f"length mismatch: {xs.shape} vs {ys.shape}")
    if len(xs) < 2:
        raise DomainError("spearman needs at least two observations")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise DomainError("spearman inputs must be finite")
    rx = average_ranks(xs)
    ry = average_ranks(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DomainError("spearman undefined for constant input")
    rho = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))


def correlate(judgments: Sequence[JudgmentItem], scores) -> dict:
    """Spearman of metric scores against relevance and thoroughness.

    ``scores`` is either a mapping ``{(image_id, candidate): score}`` or a
    sequence aligned position by position with ``judgments``.
    """
    judgments = list(judgments)
    if isinstance(scores, Mapping):
        keys = [(j.image_id, j.candidate) for j in judgments]
        missing = [k for k in keys if k not in scores]
        if missing:
            raise AlignmentError(f"no score for judgment {missing[0]}")
        extra = sorted(set(scores) - set(keys))
        if extra:
            raise AlignmentError(f"score without judgment: {extra[0]}")
        values = [scores[k] for k in keys]
    else:
        values = list(scores)
        if len(values) != len(judgments):
            raise AlignmentError(
                f"{len(values)} scores for {len(judgments)} judgments"
            )
    return {
        "relevance": spearman(values, [j.relevance for j in judgments]),
        "thoroughness": spearman(values, [j.thoroughness for j in judgments]),
    }


# ---------------------------------------------------------------------------
# JSONL readers


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"invalid JSON: {exc.msg}", path, lineno) from None


def load_forced_choice(path) -> tuple:
    """Read ``{"image_id","b","c","label","split"}`` lines.

    ``label`` may be ``"B"``/``"C"`` or a list of per-reference votes, reduced
    by majority vote. Items whose votes tie are returned separately.
    """
    items, ties = [], []
    for lineno, obj in _read_jsonl(path):
        try:
            label = obj["label"]
            if isinstance(label, list):
                label = majority_vote(label)
            if label == TIE:
                ties.append((lineno, obj["image_id"]))
                continue
            items.append(
                ForcedChoiceItem(
                    str(obj["image_id"]),
                    obj["b"],
                    obj["c"],
                    label,
                    obj.get("split", "MM"),
                )
            )
        except (KeyError, TypeError, DomainError) as exc:
            raise DataFormatError(f"bad forced-choice record: {exc}", path, lineno) from None
    return items, ties


def load_judgments(path) -> list:
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            out.append(
                JudgmentItem(
                    str(obj["image_id"]),
                    str(obj["candidate"]),
                    float(obj["relevance"]),
                    float(obj["thoroughness"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad judgment record: {exc}", path, lineno) from None
    return out


def load_references(path) -> dict:
    """Read ``{"image_id", "references": [str, ...]}`` lines, file order kept."""
    out = {}
    for lineno, obj in _read_jsonl(path):
        try:
            image_id = str(obj["image_id"])
            refs = obj["references"]
            if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
                raise TypeError("'references' must be a list of strings")
        except (KeyError, TypeError) as exc:
            raise DataFormatError(f"bad references record: {exc}", path, lineno) from None
        if image_id in out:
            raise DataFormatError(f"duplicate image_id {image_id!r}", path, lineno)
        out[image_id] = refs
    return out


def load_scores(path) -> list:
    """Read score records: ``{"image_id", "candidate_id", "score", ...}``."""
    out = []
    for lineno, obj in _read_jsonl(path):
        try:
            score = obj["score"]
            if score is None or isinstance(score, bool):
                raise TypeError("score must be a number")
            out.append(
                {
                    "image_id": str(obj["image_id"]),
                    "candidate_id": str(obj["candidate_id"]),
                    "score": float(score),
                }
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"bad score record: {exc}", path, lineno) from None
    return out
