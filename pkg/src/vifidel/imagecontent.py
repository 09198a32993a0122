"""Object-label ingestion (gold annotations or detector output) and d^I."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .embeddings import DEFAULT_POLICY, EmbeddingTable, LookupPolicy
from .exceptions import DataFormatError, DomainError
from .textproc import WordDistribution

SOURCE_GOLD = "gold"
SOURCE_DETECTOR = "detector"
SOURCE_UNION = "union"

MERGE_UNION_UNIQUE = "union-unique"
MERGE_CONCAT = "concat"

# Confidence thresholds of the two detector set-ups (80 MSCOCO classes,
# 545 Open Images classes).
THRESHOLD_PROFILES = {"d80": 0.6, "d500": 0.4, "gold": 0.0}


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float | None = None

    def __post_init__(self):
        if not self.label or not self.label.strip():
            raise DomainError("detection label must be nonempty")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise DomainError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class ImageContent:
    image_id: str
    detections: tuple = field(default_factory=tuple)
    source_tag: str = SOURCE_GOLD

    @property
    def labels(self) -> list:
        return [d.label for d in self.detections]

    @classmethod
    def from_labels(cls, image_id, labels, source_tag=SOURCE_GOLD):
        return cls(image_id, tuple(Detection(lab) for lab in labels), source_tag)


def normalize_label(label: str) -> str:
    return " ".join(label.strip().lower().split())


def parse_detection_line(obj, threshold):
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    image_id = obj.get("image_id")
    if not isinstance(image_id, str) or not image_id:
        raise ValueError("'image_id' must be a nonempty string")
    objects = obj.get("objects", [])
    if not isinstance(objects, list):
        raise ValueError("'objects' must be a list")
    kept = []
    any_scored = False
    for o in objects:
        if not isinstance(o, dict) or not isinstance(o.get("label"), str):
            raise ValueError("each object needs a string 'label'")
        score = o.get("score")
        if score is not None:
            if isinstance(score, bool) or not isinstance(score, (int, float)):
                raise ValueError(f"score for {o['label']!r} is not a number")
            any_scored = True
            score = float(score)
            if score < threshold:
                continue
        kept.append(Detection(normalize_label(o["label"]), score))
    tag = SOURCE_DETECTOR if any_scored else SOURCE_GOLD
    return ImageContent(image_id, tuple(kept), tag)


def load_detections(path, threshold: float = 0.0) -> dict:
    """Read a detections JSONL file into ``{image_id: ImageContent}``.

    Each line is ``{"image_id": str, "objects": [{"label": str, "score": num?}]}``.
    Scored objects below ``threshold`` are discarded; unscored objects (gold
    annotations) are always kept.
    """
    if not 0.0 <= threshold <= 1.0:
        raise DomainError(f"threshold {threshold} outside [0, 1]")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                content = parse_detection_line(json.loads(line), threshold)
            except (ValueError, DomainError) as exc:
                raise DataFormatError(str(exc), path, lineno) from None
            if content.image_id in out:
                raise DataFormatError(
                    f"duplicate image_id {content.image_id!r}", path, lineno
                )
            out[content.image_id] = content
    return out


def merge_sources(a: ImageContent, b: ImageContent, mode=MERGE_UNION_UNIQUE):
    if a.image_id != b.image_id:
        raise DomainError(f"cannot merge {a.image_id!r} with {b.image_id!r}")
    if mode == MERGE_CONCAT:
        dets = a.detections + b.detections
    elif mode == MERGE_UNION_UNIQUE:
        seen = {}
        for d in a.detections + b.detections:
            seen.setdefault(d.label, d)
        dets = tuple(seen.values())
    else:
        raise DomainError(f"unknown merge mode {mode!r}")
    return ImageContent(a.image_id, dets, SOURCE_UNION)


def merge_maps(maps, mode=MERGE_UNION_UNIQUE) -> dict:
    """Merge several ``load_detections`` results image by image."""
    maps = list(maps)
    if len(maps) == 1:
        return dict(maps[0])
    merged: dict = {}
    for m in maps:
        for image_id, content in m.items():
            # images present in only one source still go through the merge so
            # that union-unique dedupes them like every other image
            base = merged.get(image_id, ImageContent(image_id))
            merged[image_id] = merge_sources(base, content, mode)
    return merged


def build_image_nbow(
    content: ImageContent,
    binarize: bool,
    table: EmbeddingTable,
    policy: LookupPolicy = DEFAULT_POLICY,
) -> WordDistribution:
    counts = Counter(content.labels)
    if binarize:
        counts = {label: 1 for label in counts}
    return WordDistribution.from_counts(counts, table, policy)
