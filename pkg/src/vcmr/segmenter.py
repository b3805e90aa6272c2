"""Fixed-length, fixed-stride segment pools and their annotation coverage."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInputError, InvalidInputError
from .timespan import DEFAULT_TIOU_THRESHOLD, TimeSpan, tiou_many


@dataclass(frozen=True)
class SegmentConfig:
    """Ordered (length, stride) pairs, both in seconds."""

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pairs = tuple((float(length), float(stride)) for length, stride in self.pairs)
        if not pairs:
            raise InvalidInputError("segment config needs at least one (length, stride) pair")
        for length, stride in pairs:
            if not (length > 0 and stride > 0 and math.isfinite(length) and math.isfinite(stride)):
                raise InvalidInputError(f"length and stride must be positive, got ({length}, {stride})")
            if stride > length:
                raise InvalidInputError(f"stride {stride} exceeds its length {length}")
        lengths = [length for length, _ in pairs]
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise InvalidInputError(f"lengths must be strictly increasing, got {lengths}")
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def from_lists(cls, lengths: Sequence[float], strides: Sequence[float]) -> SegmentConfig:
        if len(lengths) != len(strides):
            raise InvalidInputError("lengths and strides must have the same number of entries")
        return cls(tuple(zip(lengths, strides)))

    @property
    def lengths(self) -> list[float]:
        return [length for length, _ in self.pairs]

    @property
    def strides(self) -> list[float]:
        return [stride for _, stride in self.pairs]

    def to_dict(self) -> dict:
        return {"lengths": self.lengths, "strides": self.strides}

    @classmethod
    def from_dict(cls, data: Mapping) -> SegmentConfig:
        if "preset" in data:
            return preset(data["preset"])
        try:
            return cls.from_lists(data["lengths"], data["strides"])
        except KeyError as exc:
            raise InvalidInputError(f"segment config is missing {exc.args[0]!r}") from None


# Grids used for TVr and How2r.
TVR_GRID = SegmentConfig.from_lists([3, 5, 10, 20, 30, 60], [1, 2, 3, 5, 8, 10])
HOW2R_GRID = SegmentConfig.from_lists([5, 10, 20, 30], [2, 5, 10, 15])

PRESETS = {"tvr": TVR_GRID, "how2r": HOW2R_GRID}


def preset(name: str) -> SegmentConfig:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise InvalidInputError(f"unknown segment preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_config(path: str | Path) -> SegmentConfig:
    with open(path, encoding="utf-8") as fh:
        return SegmentConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class VideoSegment:
    video_id: str
    span: TimeSpan
    source_length: float

    @property
    def key(self) -> str:
        return segment_key(self.video_id, self.span)

    def to_record(self) -> dict:
        return {
            "video_id": self.video_id,
            "start": self.span.start,
            "end": self.span.end,
            "source_length": self.source_length,
        }


def segment_key(video_id: str, span: TimeSpan) -> str:
    """Canonical embedding id of a segment, e.g. ``"v001[2.0,7.0]"``."""
    return f"{video_id}[{span.start!r},{span.end!r}]"


def segment_video(video_id: str, duration: float, config: SegmentConfig) -> list[VideoSegment]:
    """Slide every (length, stride) window over ``[0, duration]``.

    Windows start at multiples of the stride while they fit. If the last one
    stops short of the video end, a tail window ``[duration - length,
    duration]`` is added. A video shorter than a length yields the whole video
    once for that length. Exact duplicate spans are kept only the first time.
    """
    duration = float(duration)
    if not (duration > 0 and math.isfinite(duration)):
        raise InvalidInputError(f"video {video_id!r} has non-positive duration {duration}")
    seen: set[tuple[float, float]] = set()
    out: list[VideoSegment] = []

    def emit(start: float, end: float, length: float) -> None:
        if (start, end) not in seen:
            seen.add((start, end))
            out.append(VideoSegment(video_id, TimeSpan(start, end), length))

    for length, stride in config.pairs:
        if duration < length:
            emit(0.0, duration, length)
            continue
        m = 0
        last_end = 0.0
        # multiply rather than accumulate so starts do not drift
        while m * stride + length <= duration:
            start = m * stride
            emit(start, start + length, length)
            last_end = start + length
            m += 1
        if last_end < duration:
            emit(duration - length, duration, length)
    return out


def segment_corpus(durations: Mapping[str, float], config: SegmentConfig) -> list[VideoSegment]:
    segments: list[VideoSegment] = []
    for video_id in sorted(durations):
        segments.extend(segment_video(video_id, durations[video_id], config))
    return segments


def coverage(segments: Iterable[VideoSegment], annotations: Sequence, threshold: float = DEFAULT_TIOU_THRESHOLD) -> float:
    """Fraction of annotations matched by some same-video segment at tIoU > threshold.

    ``annotations`` may hold any objects exposing ``video_id`` and ``span``.
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidInputError(f"threshold must lie in [0, 1], got {threshold}")
    if len(annotations) == 0:
        raise EmptyInputError("coverage needs at least one annotation")
    return float(np.mean(covered_mask(segments, annotations, threshold)))


def covered_mask(segments: Iterable[VideoSegment], annotations: Sequence, threshold: float) -> np.ndarray:
    by_video: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for seg in segments:
        by_video[seg.video_id].append(seg.span.as_tuple())
    arrays = {vid: np.asarray(spans, dtype=np.float64) for vid, spans in by_video.items()}
    mask = np.zeros(len(annotations), dtype=bool)
    for n, ann in enumerate(annotations):
        pool = arrays.get(ann.video_id)
        if pool is None or ann.span is None:
            continue
        mask[n] = bool(np.any(tiou_many(pool[:, 0], pool[:, 1], ann.span) > threshold))
    return mask


def read_durations(path: str | Path) -> dict[str, float]:
    durations: dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            try:
                video_id, duration = str(row["video_id"]), float(row["duration"])
            except (KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad duration record ({exc})") from None
            if video_id in durations:
                raise InvalidInputError(f"{path}:{lineno}: duplicate video id {video_id!r}")
            durations[video_id] = duration
    return durations


def write_durations(path: str | Path, durations: Mapping[str, float]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for video_id in sorted(durations):
            fh.write(json.dumps({"video_id": video_id, "duration": float(durations[video_id])}) + "\n")


def read_segments(path: str | Path) -> list[VideoSegment]:
    segments = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            try:
                span = TimeSpan(row["start"], row["end"])
                segments.append(VideoSegment(str(row["video_id"]), span, float(row.get("source_length", span.duration()))))
            except (KeyError, TypeError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad segment record ({exc})") from None
    return segments


def write_segments(path: str | Path, segments: Iterable[VideoSegment]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for seg in segments:
            fh.write(json.dumps(seg.to_record()) + "\n")
