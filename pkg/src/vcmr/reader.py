"""Span refinement from start/end logits and retriever-reader score fusion.

Logits come from an external reader (one start and one end logit per
token of the clip's context); this module only consumes them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import InvalidInputError, NoValidSpanError
from .runs import Run, ScoredMoment, rank_order
from .timespan import TimeSpan

NORMALIZATIONS = ("none", "minmax_per_query")


@dataclass(frozen=True)
class ReaderOutput:
    query_id: str
    video_id: str
    span: TimeSpan
    start_logits: np.ndarray
    end_logits: np.ndarray

    def __post_init__(self) -> None:
        start = np.asarray(self.start_logits, dtype=np.float64)
        end = np.asarray(self.end_logits, dtype=np.float64)
        _check_logits(start, end)
        object.__setattr__(self, "start_logits", start)
        object.__setattr__(self, "end_logits", end)

    @property
    def key(self) -> tuple[str, str, float, float]:
        return (self.query_id, self.video_id, self.span.start, self.span.end)


@dataclass(frozen=True)
class FusionConfig:
    retriever_weight: float = 0.5
    reader_weight: float = 0.5
    start_threshold: float = 6.0
    end_threshold: float = 6.0
    normalize: str = "minmax_per_query"

    def __post_init__(self) -> None:
        if self.retriever_weight < 0 or self.reader_weight < 0:
            raise InvalidInputError("fusion weights must be non-negative")
        if not self.retriever_weight + self.reader_weight > 0:
            raise InvalidInputError("at least one fusion weight must be positive")
        if self.normalize not in NORMALIZATIONS:
            raise InvalidInputError(f"normalize must be one of {NORMALIZATIONS}, got {self.normalize!r}")
        if math.isnan(self.start_threshold) or math.isnan(self.end_threshold):
            raise InvalidInputError("thresholds must not be NaN")

    @classmethod
    def from_dict(cls, data: Mapping) -> FusionConfig:
        known = {"retriever_weight", "reader_weight", "start_threshold", "end_threshold", "normalize"}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError(f"unknown fusion config keys: {sorted(unknown)}")
        # JSON has no infinity literal; accept "inf" / "-inf" strings
        values = {k: float(v) if k.endswith("threshold") else v for k, v in data.items()}
        return cls(**values)


def _check_logits(start: np.ndarray, end: np.ndarray) -> None:
    if start.ndim != 1 or start.shape != end.shape:
        raise InvalidInputError(f"start/end logits must be equal-length 1-d arrays, got {start.shape} and {end.shape}")
    if start.size == 0:
        raise InvalidInputError("logit arrays are empty")
    if not (np.isfinite(start).all() and np.isfinite(end).all()):
        raise InvalidInputError("logits must be finite")


def best_span(start_logits, end_logits) -> tuple[int, int, float]:
    """Best (i, j) with i < j by ``start_logits[i] + end_logits[j]``, in O(n).

    Ties go to the smallest i, then the smallest j.
    """
    start = np.asarray(start_logits, dtype=np.float64)
    end = np.asarray(end_logits, dtype=np.float64)
    _check_logits(start, end)
    n = start.size
    if n < 2:
        raise NoValidSpanError(f"need at least 2 tokens for a start < end span, got {n}")
    prefix_max = np.maximum.accumulate(start)
    # first index attaining each prefix maximum
    is_new_max = np.empty(n, dtype=bool)
    is_new_max[0] = True
    is_new_max[1:] = start[1:] > prefix_max[:-1]
    first_arg = np.maximum.accumulate(np.where(is_new_max, np.arange(n), 0))
    totals = prefix_max[:-1] + end[1:]
    j = int(np.argmax(totals)) + 1
    i = int(first_arg[j - 1])
    return i, j, float(start[i] + end[j])


def token_to_time(i: int, j: int, n: int, clip: TimeSpan) -> TimeSpan:
    """Map tokens i..j (inclusive) of an n-token clip onto clock time.

    Token t covers ``[t/n, (t+1)/n]`` of the clip.
    """
    if not (0 <= i < j <= n - 1):
        raise InvalidInputError(f"token indices must satisfy 0 <= i < j <= n-1, got i={i}, j={j}, n={n}")
    length = clip.duration()
    start = clip.start + (i / n) * length
    end = clip.end if j + 1 == n else min(clip.start + ((j + 1) / n) * length, clip.end)
    return TimeSpan(start, end)


def _minmax(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def fuse_scores(retriever_score, reader_score, cfg: FusionConfig):
    """``w_r * r + w_d * d`` after the configured normalisation.

    Pass one query's candidate scores as arrays to get per-query min-max
    normalisation; on scalars, min-max sees a constant list and maps both
    scores to 0.5.
    """
    r = np.asarray(retriever_score, dtype=np.float64)
    d = np.asarray(reader_score, dtype=np.float64)
    if r.shape != d.shape:
        raise InvalidInputError(f"score arrays differ in shape: {r.shape} vs {d.shape}")
    if cfg.normalize == "minmax_per_query" and r.size:
        r = _minmax(r.reshape(-1)).reshape(r.shape)
        d = _minmax(d.reshape(-1)).reshape(d.shape)
    fused = cfg.retriever_weight * r + cfg.reader_weight * d
    return float(fused) if fused.ndim == 0 else fused


def _decide(candidate: ScoredMoment, reader: ReaderOutput, cfg: FusionConfig) -> tuple[TimeSpan, str, float]:
    if reader.video_id != candidate.video_id or reader.span != candidate.span:
        raise InvalidInputError(
            f"reader output for {reader.video_id!r} {reader.span} does not belong to candidate "
            f"{candidate.video_id!r} {candidate.span}"
        )
    i, j, score = best_span(reader.start_logits, reader.end_logits)
    if reader.start_logits[i] > cfg.start_threshold and reader.end_logits[j] > cfg.end_threshold:
        span = token_to_time(i, j, reader.start_logits.size, candidate.span)
        return span, "reader", score
    return candidate.span, "retriever", score


def predict_moment(candidate: ScoredMoment, reader: ReaderOutput, cfg: FusionConfig) -> ScoredMoment:
    """Refine one candidate.

    The reader's span is used only when both selected logits clear their
    thresholds; otherwise the segment's own span is kept. The fused score is
    computed on this candidate alone (see :func:`refine_run` for per-query
    normalisation).
    """
    span, provenance, reader_score = _decide(candidate, reader, cfg)
    fused = fuse_scores(candidate.score, reader_score, cfg)
    return ScoredMoment(candidate.video_id, span, fused, provenance)


def refine_run(run: Run, readers: Iterable[ReaderOutput], cfg: FusionConfig) -> Run:
    """Apply :func:`predict_moment` to every candidate and re-rank per query.

    Scores are normalised within each query's candidate list. A candidate
    without reader output keeps its span and gets the query's lowest reader
    score. When two candidates end up with the same span, the better-ranked
    one is kept.
    """
    by_key = {}
    for r in readers:
        if r.key in by_key:
            raise InvalidInputError(f"duplicate reader output for {r.key}")
        by_key[r.key] = r
    refined: Run = {}
    for query_id, candidates in run.items():
        if not candidates:
            refined[query_id] = []
            continue
        decisions = []
        for cand in candidates:
            reader = by_key.get((query_id, cand.video_id, cand.span.start, cand.span.end))
            decisions.append(None if reader is None else _decide(cand, reader, cfg))
        reader_scores = [d[2] for d in decisions if d is not None]
        floor = min(reader_scores) if reader_scores else 0.0
        r = np.array([c.score for c in candidates])
        d = np.array([floor if dec is None else dec[2] for dec in decisions])
        fused = fuse_scores(r, d, cfg)
        out = []
        for cand, dec, score in zip(candidates, decisions, np.atleast_1d(fused)):
            span, provenance = (cand.span, "retriever") if dec is None else dec[:2]
            out.append(ScoredMoment(cand.video_id, span, float(score), provenance))
        seen = set()
        deduped = []
        for moment in rank_order(out):
            if moment.key not in seen:
                seen.add(moment.key)
                deduped.append(moment)
        refined[query_id] = deduped
    return refined


def read_logits(path: str | Path) -> list[ReaderOutput]:
    outputs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                outputs.append(
                    ReaderOutput(
                        str(row["query_id"]),
                        str(row["video_id"]),
                        TimeSpan(row["start"], row["end"]),
                        row["start_logits"],
                        row["end_logits"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad logits record ({exc})") from None
    return outputs


def write_logits(path: str | Path, outputs: Iterable[ReaderOutput]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in outputs:
            record = {
                "query_id": r.query_id,
                "video_id": r.video_id,
                "start": r.span.start,
                "end": r.span.end,
                "start_logits": [float(x) for x in r.start_logits],
                "end_logits": [float(x) for x in r.end_logits],
            }
            fh.write(json.dumps(record) + "\n")
