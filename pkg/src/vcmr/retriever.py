"""Exact top-k cosine search over segment or whole-video embeddings.

Rankings are a total order: score descending, then video id, start and end
ascending. Index entries are stored in that tie-break order, so an entry's
position is its tie-break rank.

Reported scores come from a row-wise float64 reduction whose result depends
only on the row's contents, never on its position in the index or on
batching. A float32 BLAS pass narrows each query to a candidate set first;
its error is far below the selection margin, so the output is unaffected.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingStore
from .errors import DimensionMismatchError, InvalidInputError, MalformedHeaderError
from .runs import Run, ScoredMoment
from .segmenter import VideoSegment
from .timespan import TimeSpan

_CHUNK = 8192
_QUERY_BATCH = 32
# the float32 pre-pass is accurate to ~1e-6 on cosine scores
_MARGIN = 1e-3

INDEX_MAGIC = b"VIX1"


def _row_dots(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    # einsum's own loop (no BLAS) gives bit-identical results for identical rows
    return np.einsum("ij,j->i", rows, query)


def _norm(query: np.ndarray) -> float:
    q = np.asarray(query, dtype=np.float64)
    return float(np.sqrt(_row_dots(q[None, :], q)[0]))


def _cosines(rows: np.ndarray, row_norms: np.ndarray, query: np.ndarray, query_norm: float) -> np.ndarray:
    dots = _row_dots(rows.astype(np.float64, copy=False), query)
    denom = row_norms * query_norm
    out = np.zeros_like(dots)
    ok = denom > 0
    np.divide(dots, denom, out=out, where=ok)
    return np.clip(out, -1.0, 1.0)


def cosine_similarity(q, v) -> float:
    """dot(q, v) / (|q| |v|), or 0 when either vector is zero."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if q.shape != v.shape or q.ndim != 1:
        raise DimensionMismatchError(f"cannot compare vectors of shapes {q.shape} and {v.shape}")
    return float(_cosines(v[None, :], np.array([_norm(v)]), q, _norm(q))[0])


@dataclass(frozen=True)
class IndexEntry:
    video_id: str
    span: TimeSpan
    source_length: float


class SegmentIndex:
    """Immutable search index.

    Build with :meth:`from_segments` (moment retrieval) or
    :meth:`from_videos` (whole-video retrieval); entries are reordered into
    tie-break order on construction.
    """

    def __init__(self, entries: Sequence[IndexEntry], vectors: np.ndarray, whole_video: bool = False):
        vectors = np.asarray(vectors, dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(entries):
            raise DimensionMismatchError(f"{len(entries)} entries but vector array of shape {vectors.shape}")
        order = sorted(range(len(entries)), key=lambda n: (entries[n].video_id, entries[n].span.start, entries[n].span.end))
        self.entries: list[IndexEntry] = [entries[n] for n in order]
        keys = [(e.video_id, e.span.start, e.span.end) for e in self.entries]
        if len(set(keys)) != len(keys):
            raise InvalidInputError("index contains duplicate (video_id, start, end) entries")
        self.vectors = np.ascontiguousarray(vectors[np.asarray(order, dtype=np.intp)])
        self.vectors.setflags(write=False)
        self.norms = np.empty(len(entries), dtype=np.float64)
        for lo in range(0, len(entries), _CHUNK):
            chunk = self.vectors[lo:lo + _CHUNK].astype(np.float64)
            self.norms[lo:lo + _CHUNK] = np.sqrt(np.einsum("ij,ij->i", chunk, chunk))
        self.norms.setflags(write=False)
        self.whole_video = whole_video

    @classmethod
    def from_segments(cls, segments: Sequence[VideoSegment], store: EmbeddingStore) -> SegmentIndex:
        """Look up each segment's vector under its canonical :func:`segment_key`."""
        entries = [IndexEntry(s.video_id, s.span, s.source_length) for s in segments]
        missing = [s.key for s in segments if s.key not in store]
        if missing:
            raise InvalidInputError(f"{len(missing)} segments have no embedding, e.g. {missing[0]!r}")
        vectors = store.rows(s.key for s in segments) if segments else np.zeros((0, store.dimension), np.float32)
        return cls(entries, vectors)

    @classmethod
    def from_videos(cls, durations: Mapping[str, float], store: EmbeddingStore) -> SegmentIndex:
        ids = sorted(durations)
        missing = [v for v in ids if v not in store]
        if missing:
            raise InvalidInputError(f"{len(missing)} videos have no embedding, e.g. {missing[0]!r}")
        entries = [IndexEntry(v, TimeSpan(0.0, durations[v]), float(durations[v])) for v in ids]
        vectors = store.rows(ids) if ids else np.zeros((0, store.dimension), np.float32)
        return cls(entries, vectors, whole_video=True)

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.entries)

    def moment(self, position: int, score: float) -> ScoredMoment:
        entry = self.entries[position]
        return ScoredMoment(entry.video_id, entry.span, score, "retriever")


def _check_query(query, index: SegmentIndex) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != index.dimension:
        raise DimensionMismatchError(f"query of shape {q.shape} does not match index dimension {index.dimension}")
    if not np.isfinite(q).all():
        raise InvalidInputError("query has non-finite components")
    return q


def score_all(query, index: SegmentIndex) -> np.ndarray:
    """Exact cosine of ``query`` against every entry, in index order."""
    q = _check_query(query, index)
    qn = _norm(q)
    out = np.empty(len(index), dtype=np.float64)
    for lo in range(0, len(index), _CHUNK):
        hi = lo + _CHUNK
        out[lo:hi] = _cosines(index.vectors[lo:hi], index.norms[lo:hi], q, qn)
    return out


def _select(positions: np.ndarray, scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    # positions are ascending, so they double as the tie-break key
    order = np.lexsort((positions, -scores))[:k]
    return positions[order], scores[order]


def _search_batch(queries: np.ndarray, index: SegmentIndex, k: int) -> list[list[ScoredMoment]]:
    n = len(index)
    kk = min(k, n)
    qnorms = np.array([_norm(q) for q in queries])
    unit = np.zeros_like(queries)
    np.divide(queries, qnorms[:, None], out=unit, where=qnorms[:, None] > 0)
    approx = unit.astype(np.float32) @ index.vectors.T
    norms32 = index.norms.astype(np.float32)
    results = []
    for row, q in enumerate(queries):
        a = np.zeros(n, dtype=np.float32)
        np.divide(approx[row], norms32, out=a, where=norms32 > 0)
        kth = np.partition(a, n - kk)[n - kk]
        cand = np.flatnonzero(a >= kth - _MARGIN)
        exact = _cosines(index.vectors[cand], index.norms[cand], q, qnorms[row])
        pos, sc = _select(cand, exact, kk)
        results.append([index.moment(int(p), float(s)) for p, s in zip(pos, sc)])
    return results


def search_topk(query, index: SegmentIndex, k: int) -> list[ScoredMoment]:
    """The ``min(k, len(index))`` best entries, best first."""
    if k < 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    q = _check_query(query, index)
    if len(index) == 0:
        return []
    return _search_batch(q[None, :], index, k)[0]


def search_many(queries, index: SegmentIndex, k: int, workers: int = 1) -> list[list[ScoredMoment]]:
    """:func:`search_topk` for each row of ``queries``; output is independent of ``workers``."""
    if k < 1:
        raise InvalidInputError(f"k must be at least 1, got {k}")
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-d query array, got shape {queries.shape}")
    for q in queries:
        _check_query(q, index)
    if len(index) == 0:
        return [[] for _ in range(len(queries))]
    batches = [queries[lo:lo + _QUERY_BATCH] for lo in range(0, len(queries), _QUERY_BATCH)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: _search_batch(b, index, k), batches))
    else:
        parts = [_search_batch(b, index, k) for b in batches]
    return [hits for part in parts for hits in part]


def retrieve_vr(query, whole_video_index: SegmentIndex, k: int) -> list[ScoredMoment]:
    """Rank whole videos; each result spans ``[0, duration]``."""
    if not whole_video_index.whole_video:
        raise InvalidInputError("video retrieval needs an index built with SegmentIndex.from_videos")
    return search_topk(query, whole_video_index, k)


def retrieve_vcmr(query, segment_index: SegmentIndex, k: int) -> list[ScoredMoment]:
    """Rank segments; each result's span is the segment boundaries."""
    if segment_index.whole_video:
        raise InvalidInputError("moment retrieval needs a segment index, not a whole-video index")
    return search_topk(query, segment_index, k)


def search_run(queries: EmbeddingStore, index: SegmentIndex, k: int, workers: int = 1) -> Run:
    ids = sorted(queries.ids)
    if not ids:
        return {}
    hits = search_many(queries.rows(ids), index, k, workers)
    return dict(zip(ids, hits))


def write_index(index: SegmentIndex, path: str | Path) -> None:
    """VIX1: magic, u32 LE header length, JSON header, then N x D float32 LE."""
    header = {
        "dimension": index.dimension,
        "count": len(index),
        "whole_video": index.whole_video,
        "entries": [[e.video_id, e.span.start, e.span.end, e.source_length] for e in index.entries],
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(index.vectors.astype("<f4").tobytes())


def read_index(path: str | Path) -> SegmentIndex:
    data = Path(path).read_bytes()
    if data[:4] != INDEX_MAGIC or len(data) < 8:
        raise MalformedHeaderError(f"{path}: not a VIX1 index file")
    (hlen,) = struct.unpack_from("<I", data, 4)
    try:
        header = json.loads(data[8:8 + hlen].decode("utf-8"))
        dim, count = int(header["dimension"]), int(header["count"])
        entries = [IndexEntry(str(v), TimeSpan(s, e), float(l)) for v, s, e, l in header["entries"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedHeaderError(f"{path}: bad index header ({exc})") from None
    body = data[8 + hlen:]
    if len(body) != count * dim * 4 or len(entries) != count:
        raise MalformedHeaderError(f"{path}: body size does not match {count} x {dim} float32 vectors")
    vectors = np.frombuffer(body, dtype="<f4").reshape(count, dim)
    return SegmentIndex(entries, vectors, whole_video=bool(header.get("whole_video", False)))
