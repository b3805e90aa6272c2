"""Ranked runs: per-query lists of scored moments, and the JSONL run file.

A run file has one line per (query, rank)::

    {"query_id": "q1", "rank": 1, "video_id": "v7", "start": 2.0, "end": 7.0,
     "score": 0.93, "provenance": "retriever"}

sorted by query id, then rank. ``provenance`` is optional on read.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List

from .errors import InvalidInputError
from .timespan import TimeSpan

PROVENANCES = ("retriever", "reader", "ensemble")


@dataclass(frozen=True)
class ScoredMoment:
    video_id: str
    span: TimeSpan
    score: float
    provenance: str = "retriever"

    def __post_init__(self) -> None:
        score = float(self.score)
        if not math.isfinite(score):
            raise InvalidInputError(f"non-finite score {self.score} for video {self.video_id!r}")
        if self.provenance not in PROVENANCES:
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "score", score)

    @property
    def key(self) -> tuple[str, float, float]:
        """Identity used to match candidates across runs."""
        return (self.video_id, self.span.start, self.span.end)

    def with_score(self, score: float, provenance: str | None = None) -> ScoredMoment:
        return replace(self, score=score, provenance=provenance or self.provenance)


Run = Dict[str, List[ScoredMoment]]


def rank_order(moments: list[ScoredMoment]) -> list[ScoredMoment]:
    """Sort by score descending, then (video_id, start, end) ascending."""
    return sorted(moments, key=lambda m: (-m.score, m.video_id, m.span.start, m.span.end))


def write_run(path: str | Path, run: Run) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for query_id in sorted(run):
            for rank, moment in enumerate(run[query_id], 1):
                record = {
                    "query_id": query_id,
                    "rank": rank,
                    "video_id": moment.video_id,
                    "start": moment.span.start,
                    "end": moment.span.end,
                    "score": moment.score,
                    "provenance": moment.provenance,
                }
                fh.write(json.dumps(record) + "\n")


def read_run(path: str | Path) -> Run:
    """Parse a run file; line order does not matter, ranks must be 1..m per query."""
    ranked: dict[str, dict[int, ScoredMoment]] = defaultdict(dict)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                query_id, rank = str(row["query_id"]), int(row["rank"])
                moment = ScoredMoment(
                    str(row["video_id"]),
                    TimeSpan(row["start"], row["end"]),
                    row["score"],
                    row.get("provenance", "retriever"),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InvalidInputError(f"{path}:{lineno}: bad run record ({exc})") from None
            if rank in ranked[query_id]:
                raise InvalidInputError(f"{path}:{lineno}: query {query_id!r} repeats rank {rank}")
            ranked[query_id][rank] = moment
    run: Run = {}
    for query_id, by_rank in ranked.items():
        if sorted(by_rank) != list(range(1, len(by_rank) + 1)):
            raise InvalidInputError(f"{path}: ranks of query {query_id!r} are not 1..{len(by_rank)}")
        run[query_id] = [by_rank[r] for r in range(1, len(by_rank) + 1)]
    return run
