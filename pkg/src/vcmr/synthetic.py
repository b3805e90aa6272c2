"""Synthetic corpora with planted ground truth.

Each video has a shared base direction; each pool segment's encoding is
built the same way real encodings are: a precomputed visual feature
(base + segment-specific part) plus a raw visual feature (sometimes
missing, i.e. zero) plus a subtitle feature. The whole-video encoding is
the mean of its segment encodings.

Every query is planted on one pool segment: its embedding is that
segment's encoding plus isotropic Gaussian noise whose expected norm is
``noise`` times the segment encoding's norm. All randomness comes from one
seed, and the noise direction is drawn independently of ``noise`` so that
corpora differing only in ``noise`` share everything else.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .embeddings import EmbeddingStore, fuse_features, fuse_modalities, save_store
from .errors import InvalidInputError
from .evaluation import Annotation, write_annotations
from .segmenter import (
    HOW2R_GRID,
    SegmentConfig,
    VideoSegment,
    preset,
    segment_corpus,
    write_durations,
    write_segments,
)
from .timespan import TimeSpan

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class SyntheticSpec:
    n_videos: int = 1000
    min_duration: float = 40.0
    max_duration: float = 76.0
    annotations_per_video: int = 1
    dim: int = 256
    noise: float = 0.0
    seed: int = 0
    lengths: tuple[float, ...] = field(default_factory=lambda: tuple(HOW2R_GRID.lengths))
    strides: tuple[float, ...] = field(default_factory=lambda: tuple(HOW2R_GRID.strides))
    video_share: float = 0.5
    missing_raw_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.n_videos < 1 or self.annotations_per_video < 1 or self.dim < 1:
            raise InvalidInputError("n_videos, annotations_per_video and dim must be positive")
        if not 0 < self.min_duration <= self.max_duration or not math.isfinite(self.max_duration):
            raise InvalidInputError(f"bad duration range [{self.min_duration}, {self.max_duration}]")
        if not (self.noise >= 0 and math.isfinite(self.noise)):
            raise InvalidInputError(f"noise must be a finite non-negative number, got {self.noise}")
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if not 0 <= self.video_share <= 1 or not 0 <= self.missing_raw_fraction <= 1:
            raise InvalidInputError("video_share and missing_raw_fraction must lie in [0, 1]")
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        object.__setattr__(self, "strides", tuple(float(x) for x in self.strides))
        SegmentConfig.from_lists(self.lengths, self.strides)

    @property
    def config(self) -> SegmentConfig:
        return SegmentConfig.from_lists(self.lengths, self.strides)

    @classmethod
    def from_dict(cls, data: Mapping) -> SyntheticSpec:
        data = dict(data)
        if "duration_range" in data:
            data["min_duration"], data["max_duration"] = data.pop("duration_range")
        if "preset" in data:
            grid = preset(data.pop("preset"))
            data["lengths"], data["strides"] = grid.lengths, grid.strides
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInputError(f"unknown synthetic spec keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> SyntheticSpec:
        path = Path(path)
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SyntheticCorpus:
    spec: SyntheticSpec
    durations: dict[str, float]
    segments: list[VideoSegment]
    annotations: list[Annotation]
    segment_store: EmbeddingStore
    video_store: EmbeddingStore
    query_store: EmbeddingStore
    planted: dict[str, str]  # query id -> segment key


def _gaussian(rng: np.random.Generator, shape, dim: int) -> np.ndarray:
    return rng.standard_normal(shape) / math.sqrt(dim)


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    D = spec.dim
    width = len(str(spec.n_videos - 1))
    video_ids = [f"v{n:0{width}d}" for n in range(spec.n_videos)]
    raw_durations = rng.uniform(spec.min_duration, spec.max_duration, size=spec.n_videos)
    durations = {v: round(float(d), 1) for v, d in zip(video_ids, raw_durations)}
    segments = segment_corpus(durations, spec.config)
    n_seg = len(segments)

    base = _gaussian(rng, (spec.n_videos, D), D)
    own = _gaussian(rng, (n_seg, D), D)
    raw = _gaussian(rng, (n_seg, D), D)
    subtitle = _gaussian(rng, (n_seg, D), D)
    raw_missing = rng.random(n_seg) < spec.missing_raw_fraction

    video_row = {v: n for n, v in enumerate(video_ids)}
    seg_video = np.array([video_row[s.video_id] for s in segments], dtype=np.intp)
    precomputed = math.sqrt(spec.video_share) * base[seg_video] + math.sqrt(1 - spec.video_share) * own
    # a missing raw feature contributes the zero vector
    visual = fuse_features(precomputed, np.where(raw_missing[:, None], 0.0, raw))
    fused = fuse_modalities(visual, subtitle)
    fused32 = fused.astype(np.float32)
    segment_store = EmbeddingStore([s.key for s in segments], fused32, "fused")

    # segments are grouped by video, in video order
    counts = np.bincount(seg_video, minlength=spec.n_videos)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    video_vectors = np.add.reduceat(fused32.astype(np.float64), offsets, axis=0) / counts[:, None]
    video_store = EmbeddingStore(video_ids, video_vectors, "fused")

    # per video: pick a length uniformly from the grid, then one of its segments
    by_video: dict[str, dict[float, list[int]]] = {}
    for n, s in enumerate(segments):
        by_video.setdefault(s.video_id, {}).setdefault(s.source_length, []).append(n)
    n_queries = spec.n_videos * spec.annotations_per_video
    qwidth = len(str(n_queries - 1))
    annotations, planted, gt_rows = [], {}, []
    q = 0
    for v in video_ids:
        lengths = sorted(by_video[v])
        for _ in range(spec.annotations_per_video):
            length = lengths[int(rng.integers(len(lengths)))]
            pool = by_video[v][length]
            row = pool[int(rng.integers(len(pool)))]
            query_id = f"q{q:0{qwidth}d}"
            seg = segments[row]
            annotations.append(Annotation(query_id, v, TimeSpan(seg.span.start, seg.span.end)))
            planted[query_id] = seg.key
            gt_rows.append(row)
            q += 1

    direction = rng.standard_normal((n_queries, D))
    target = fused32[np.asarray(gt_rows, dtype=np.intp)].astype(np.float64)
    scale = spec.noise * np.linalg.norm(target, axis=1, keepdims=True) / math.sqrt(D)
    queries = target + scale * direction
    query_store = EmbeddingStore([a.query_id for a in annotations], queries, "query")

    return SyntheticCorpus(spec, durations, segments, annotations, segment_store, video_store, query_store, planted)


def write_corpus(corpus: SyntheticCorpus, out_dir: str | Path) -> Path:
    """Write the corpus in the package's file formats; returns ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = asdict(corpus.spec)
    spec["lengths"], spec["strides"] = list(spec["lengths"]), list(spec["strides"])
    (out / "spec.json").write_text(json.dumps(spec, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_durations(out / "durations.jsonl", corpus.durations)
    (out / "grid.json").write_text(json.dumps(corpus.spec.config.to_dict()) + "\n", encoding="utf-8")
    write_segments(out / "segments.jsonl", corpus.segments)
    write_annotations(out / "annotations.jsonl", corpus.annotations)
    save_store(corpus.segment_store, out / "segments.emb", "binary")
    save_store(corpus.video_store, out / "videos.emb", "binary")
    save_store(corpus.query_store, out / "queries.emb", "binary")
    return out
