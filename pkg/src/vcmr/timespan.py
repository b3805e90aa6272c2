"""Closed time intervals in seconds and the temporal IoU hit predicate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidSpanError

DEFAULT_TIOU_THRESHOLD = 0.7


@dataclass(frozen=True, order=True)
class TimeSpan:
    start: float
    end: float

    def __post_init__(self) -> None:
        start, end = float(self.start), float(self.end)
        if not (math.isfinite(start) and math.isfinite(end)):
            raise InvalidSpanError(f"non-finite span [{self.start}, {self.end}]")
        if start < 0.0:
            raise InvalidSpanError(f"span starts before 0: [{start}, {end}]")
        if end <= start:
            raise InvalidSpanError(f"span must have positive length: [{start}, {end}]")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    def duration(self) -> float:
        return self.end - self.start

    def shift(self, offset: float) -> TimeSpan:
        return TimeSpan(self.start + offset, self.end + offset)

    def as_tuple(self) -> tuple[float, float]:
        return (self.start, self.end)


@dataclass(frozen=True)
class MomentPrediction:
    video_id: str
    span: TimeSpan

    def __post_init__(self) -> None:
        if not self.video_id:
            raise InvalidInputError("video_id must be a nonempty string")


def tiou(a: TimeSpan, b: TimeSpan) -> float:
    """Temporal intersection over union of two spans.

    The union is ``duration(a) + duration(b) - overlap``, so disjoint spans
    score 0 and identical spans score exactly 1.
    """
    for span in (a, b):
        if not isinstance(span, TimeSpan):
            raise InvalidSpanError(f"expected TimeSpan, got {type(span).__name__}")
    overlap = max(0.0, min(a.end, b.end) - max(a.start, b.start))
    union = a.duration() + b.duration() - overlap
    return overlap / union


def tiou_many(starts: np.ndarray, ends: np.ndarray, span: TimeSpan) -> np.ndarray:
    """Vectorised :func:`tiou` of one span against many (already validated) spans."""
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    overlap = np.clip(np.minimum(ends, span.end) - np.maximum(starts, span.start), 0.0, None)
    union = (ends - starts) + span.duration() - overlap
    return overlap / union


def vcmr_hit(pred: MomentPrediction, gt: MomentPrediction, threshold: float = DEFAULT_TIOU_THRESHOLD) -> bool:
    # strict ">": a tIoU equal to the threshold is a miss
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must lie in [0, 1], got {threshold}")
    overlap = tiou(pred.span, gt.span)
    return pred.video_id == gt.video_id and overlap > threshold
