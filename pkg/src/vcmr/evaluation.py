"""Recall@k for video retrieval (VR) and moment retrieval (VCMR) runs."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, InvalidInputError
from .runs import Run, ScoredMoment
from .timespan import DEFAULT_TIOU_THRESHOLD, MomentPrediction, TimeSpan, vcmr_hit

log = logging.getLogger(__name__)

TASKS = ("VR", "VCMR")


@dataclass(frozen=True)
class Annotation:
    query_id: str
    video_id: str
    span: TimeSpan | None = None

    def __post_init__(self) -> None:
        if not self.query_id or not self.video_id:
            raise InvalidInputError("annotations need a nonempty query_id and video_id")


@dataclass(frozen=True)
class EvalConfig:
    ks: tuple[int, ...] = (1, 5, 10)
    tiou_threshold: float = DEFAULT_TIOU_THRESHOLD
    task: str = "VCMR"

    def __post_init__(self) -> None:
        ks = tuple(int(k) for k in self.ks)
        if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise InvalidInputError(f"ks must be positive and strictly ascending, got {self.ks}")
        if not 0.0 <= self.tiou_threshold <= 1.0:
            raise InvalidInputError(f"tiou_threshold must lie in [0, 1], got {self.tiou_threshold}")
        if self.task not in TASKS:
            raise InvalidInputError(f"task must be one of {TASKS}, got {self.task!r}")
        object.__setattr__(self, "ks", ks)


@dataclass
class EvalReport:
    recalls: dict[int, float]
    average_recall: float
    n_queries: int
    task: str
    tiou_threshold: float
    dataset_ranks: list[int] | None = None
    average_rank: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "tiou_threshold": self.tiou_threshold,
            "n_queries": self.n_queries,
            "recall": {f"R@{k}": v for k, v in self.recalls.items()},
            "average_recall": self.average_recall,
        }
        if self.dataset_ranks is not None:
            out["dataset_ranks"] = list(self.dataset_ranks)
            out["average_rank"] = self.average_rank
        out.update(self.extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _hit_fn(config: EvalConfig):
    if config.task == "VR":
        return lambda moment, ann: moment.video_id == ann.video_id

    def vcmr(moment: ScoredMoment, ann: Annotation) -> bool:
        return vcmr_hit(
            MomentPrediction(moment.video_id, moment.span),
            MomentPrediction(ann.video_id, ann.span),
            config.tiou_threshold,
        )

    return vcmr


def _check_annotations(annotations: Sequence[Annotation], config: EvalConfig) -> None:
    if len(annotations) == 0:
        raise EmptyInputError("no annotations to evaluate against")
    seen = set()
    for ann in annotations:
        if ann.query_id in seen:
            raise InvalidInputError(f"query {ann.query_id!r} has more than one annotation")
        seen.add(ann.query_id)
        if config.task == "VCMR" and ann.span is None:
            raise InvalidInputError(f"VCMR evaluation needs a span for query {ann.query_id!r}")


def first_hit_ranks(run: Run, annotations: Sequence[Annotation], config: EvalConfig, depth: int | None = None) -> np.ndarray:
    """1-based rank of each query's first hit, or 0 when there is none within ``depth``."""
    _check_annotations(annotations, config)
    hit = _hit_fn(config)
    depth = max(config.ks) if depth is None else depth
    ranks = np.zeros(len(annotations), dtype=np.int64)
    missing = 0
    for n, ann in enumerate(annotations):
        moments = run.get(ann.query_id)
        if moments is None:
            missing += 1
            continue
        for rank, moment in enumerate(moments[:depth], 1):
            if hit(moment, ann):
                ranks[n] = rank
                break
    if missing:
        log.info("%d of %d annotated queries are absent from the run; counted as misses", missing, len(annotations))
    return ranks


def recall_at_k(run: Run, annotations: Sequence[Annotation], k: int, config: EvalConfig | None = None) -> float:
    """Fraction of queries with a hit in the top ``k``."""
    if k < 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    config = config or EvalConfig()
    ranks = first_hit_ranks(run, annotations, config, depth=k)
    return float(np.mean(ranks > 0))


def evaluate(run: Run, annotations: Sequence[Annotation], config: EvalConfig | None = None, dataset_ranks: Sequence[int] | None = None) -> EvalReport:
    config = config or EvalConfig()
    ranks = first_hit_ranks(run, annotations, config)
    recalls = {k: float(np.mean((ranks > 0) & (ranks <= k))) for k in config.ks}
    report = EvalReport(
        recalls=recalls,
        average_recall=float(np.mean(list(recalls.values()))),
        n_queries=len(annotations),
        task=config.task,
        tiou_threshold=config.tiou_threshold,
    )
    if dataset_ranks is not None:
        report.dataset_ranks = [int(r) for r in dataset_ranks]
        report.average_rank = average_rank(report.dataset_ranks)
    return report


def average_rank(per_dataset_ranks: Sequence[int]) -> float:
    """Mean of per-dataset leaderboard positions."""
    ranks = list(per_dataset_ranks)
    if not ranks:
        raise EmptyInputError("average_rank needs at least one rank")
    for r in ranks:
        if int(r) != r or r < 1:
            raise InvalidInputError(f"ranks must be positive integers, got {r!r}")
    return sum(ranks) / len(ranks)


def read_annotations(path: str | Path) -> list[Annotation]:
    annotations = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                has_start, has_end = row.get("start") is not None, row.get("end") is not None
                if has_start != has_end:
                    raise ValueError("give both start and end, or neither")
                span = TimeSpan(row["start"], row["end"]) if has_start else None
                ann = Annotation(str(row["query_id"]), str(row["video_id"]), span)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad annotation ({exc})") from None
            if ann.query_id in seen:
                raise InvalidInputError(f"{path}:{lineno}: query {ann.query_id!r} has more than one annotation")
            seen.add(ann.query_id)
            annotations.append(ann)
    return annotations


def write_annotations(path: str | Path, annotations: Sequence[Annotation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            row = {"query_id": ann.query_id, "video_id": ann.video_id}
            if ann.span is not None:
                row["start"], row["end"] = ann.span.start, ann.span.end
            fh.write(json.dumps(row) + "\n")
