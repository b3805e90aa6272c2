"""Weighted merge of two runs and grid search of the weights."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, InvalidInputError
from .evaluation import Annotation, EvalConfig, evaluate
from .runs import Run, ScoredMoment
from .timespan import TimeSpan

NORMALIZATIONS = ("none", "minmax_per_query")


@dataclass(frozen=True, order=True)
class EnsembleWeights:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise InvalidInputError(f"ensemble weights must be non-negative, got ({self.alpha}, {self.beta})")
        if not self.alpha + self.beta > 0:
            raise InvalidInputError("alpha + beta must be positive")


def default_grid(steps: int = 20) -> list[EnsembleWeights]:
    """alpha = 0, 1/steps, ..., 1 with beta = 1 - alpha."""
    return [EnsembleWeights(i / steps, (steps - i) / steps) for i in range(steps + 1)]


def _normalized(moments: list[ScoredMoment], normalize: str) -> dict[tuple, float]:
    scores = np.array([m.score for m in moments], dtype=np.float64)
    if normalize == "minmax_per_query" and scores.size:
        lo, hi = scores.min(), scores.max()
        scores = np.full_like(scores, 0.5) if hi == lo else (scores - lo) / (hi - lo)
    out: dict[tuple, float] = {}
    for m, s in zip(moments, scores):
        # a run may list the same moment twice; keep its best score
        out.setdefault(m.key, float(s))
    return out


def merge_rerank(run_a: Run, run_b: Run, weights: EnsembleWeights, normalize: str = "minmax_per_query") -> Run:
    """Union both runs per query and re-rank by ``alpha * a + beta * b``.

    Candidates match only on exact (video_id, start, end). A candidate missing
    from one run gets that run's lowest (normalised) score for the query, or
    0 if the run has nothing for the query.
    """
    if normalize not in NORMALIZATIONS:
        raise InvalidInputError(f"normalize must be one of {NORMALIZATIONS}, got {normalize!r}")
    merged: Run = {}
    for query_id in sorted(set(run_a) | set(run_b)):
        a = _normalized(run_a.get(query_id, []), normalize)
        b = _normalized(run_b.get(query_id, []), normalize)
        floor_a = min(a.values(), default=0.0)
        floor_b = min(b.values(), default=0.0)
        moments = []
        for key in a.keys() | b.keys():
            score = weights.alpha * a.get(key, floor_a) + weights.beta * b.get(key, floor_b)
            video_id, start, end = key
            moments.append((video_id, start, end, score))
        moments.sort(key=lambda t: (-t[3], t[0], t[1], t[2]))
        merged[query_id] = [_moment(*t) for t in moments]
    return merged


def _moment(video_id: str, start: float, end: float, score: float) -> ScoredMoment:
    return ScoredMoment(video_id, TimeSpan(start, end), score, "ensemble")


def grid_search(
    run_a: Run,
    run_b: Run,
    annotations: Sequence[Annotation],
    grid: Sequence[EnsembleWeights] | None = None,
    config: EvalConfig | None = None,
    normalize: str = "minmax_per_query",
    workers: int = 1,
) -> tuple[EnsembleWeights, float]:
    """Exhaustively evaluate every grid point; return the best by average recall.

    Ties go to the smallest alpha, then the smallest beta.
    """
    return select_best(grid_scores(run_a, run_b, annotations, grid, config, normalize, workers))


def select_best(scored: Sequence[tuple[EnsembleWeights, float]]) -> tuple[EnsembleWeights, float]:
    best_w, best_v = None, -np.inf
    for w, value in sorted(scored, key=lambda t: (t[0].alpha, t[0].beta)):
        if value > best_v:
            best_w, best_v = w, value
    return best_w, best_v


def grid_scores(run_a, run_b, annotations, grid=None, config=None, normalize="minmax_per_query", workers=1):
    """Average recall of the merged run at every grid point, in grid order."""
    grid = default_grid() if grid is None else list(grid)
    if not grid:
        raise EmptyInputError("weight grid is empty")
    if len(annotations) == 0:
        raise EmptyInputError("grid search needs validation annotations")
    config = config or EvalConfig()

    def score(w: EnsembleWeights) -> float:
        return evaluate(merge_rerank(run_a, run_b, w, normalize), annotations, config).average_recall

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = list(pool.map(score, grid))
    else:
        values = [score(w) for w in grid]
    return list(zip(grid, values))

