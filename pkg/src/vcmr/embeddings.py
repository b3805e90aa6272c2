"""Embedding stores: EMB1 binary and JSONL formats, plus feature fusion.

EMB1 layout (all little-endian)::

    b"EMB1" | u32 dimension D | u64 count N
    N x ( u16 id byte length | UTF-8 id | D x float32 )

Vectors are held as float32, exactly as on disk.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    EmbeddingDimensionError,
    InvalidInputError,
    MalformedHeaderError,
    NonFiniteValueError,
)

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sIQ")
_ID_LEN = struct.Struct("<H")
_F32 = np.dtype("<f4")

KINDS = ("visual_precomputed", "visual_raw", "subtitle", "query", "fused")


class EmbeddingStore:
    """Immutable id -> vector map with a shared dimension.

    Equality compares the id -> vector map only; record order is kept for
    serialisation but carries no meaning.
    """

    def __init__(self, ids: Sequence[str], vectors: np.ndarray, kind: str = "fused"):
        if kind not in KINDS:
            raise InvalidInputError(f"unknown embedding kind {kind!r}")
        with np.errstate(over="ignore"):
            vectors = np.array(vectors, dtype=np.float32, copy=True)
        ids = [str(i) for i in ids]
        if vectors.ndim != 2:
            raise EmbeddingDimensionError(f"expected a 2-d vector array, got shape {vectors.shape}")
        if vectors.shape[0] != len(ids):
            raise EmbeddingDimensionError(f"{len(ids)} ids but {vectors.shape[0]} vectors")
        if vectors.shape[1] < 1:
            raise EmbeddingDimensionError("embedding dimension must be at least 1")
        index: dict[str, int] = {}
        for row, record_id in enumerate(ids):
            if record_id in index:
                raise DuplicateIdError(f"duplicate embedding id {record_id!r}")
            if len(record_id.encode("utf-8")) > 0xFFFF:
                raise InvalidInputError(f"id {record_id[:40]!r}... is longer than 65535 bytes")
            index[record_id] = row
        finite = np.isfinite(vectors).all(axis=1)
        if not finite.all():
            bad = ids[int(np.argmin(finite))]
            raise NonFiniteValueError(f"record {bad!r} has a non-finite component")
        vectors.setflags(write=False)
        self._ids = ids
        self._index = index
        self._vectors = vectors
        self.kind = kind

    @classmethod
    def from_mapping(cls, records: Mapping[str, Sequence[float]], kind: str = "fused", dimension: int | None = None) -> EmbeddingStore:
        ids = list(records)
        if not ids:
            if dimension is None:
                raise InvalidInputError("an empty store needs an explicit dimension")
            return cls([], np.zeros((0, dimension), dtype=np.float32), kind)
        rows = [np.asarray(records[i], dtype=np.float64) for i in ids]
        dim = rows[0].shape[0] if dimension is None else dimension
        for record_id, row in zip(ids, rows):
            if row.shape != (dim,):
                raise EmbeddingDimensionError(f"record {record_id!r} has dimension {row.shape[0]}, expected {dim}")
        return cls(ids, np.stack(rows), kind)

    @property
    def dimension(self) -> int:
        return int(self._vectors.shape[1])

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, record_id: object) -> bool:
        return record_id in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._ids)

    def __getitem__(self, record_id: str) -> np.ndarray:
        try:
            return self._vectors[self._index[record_id]]
        except KeyError:
            raise KeyError(f"no embedding with id {record_id!r}") from None

    def get(self, record_id: str, default=None):
        row = self._index.get(record_id)
        return default if row is None else self._vectors[row]

    def rows(self, record_ids: Iterable[str]) -> np.ndarray:
        """Stack the vectors for ``record_ids`` (in that order) into one array."""
        try:
            positions = [self._index[i] for i in record_ids]
        except KeyError as exc:
            raise KeyError(f"no embedding with id {exc.args[0]!r}") from None
        return self._vectors[np.asarray(positions, dtype=np.intp)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        if self.dimension != other.dimension or set(self._index) != set(other._index):
            return False
        order = [other._index[i] for i in self._ids]
        return bool(np.array_equal(self._vectors.view(np.uint32), other._vectors[order].view(np.uint32)))

    def __repr__(self) -> str:
        return f"EmbeddingStore(kind={self.kind!r}, count={len(self)}, dimension={self.dimension})"


def write_binary(store: EmbeddingStore, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, store.dimension, len(store)))
        vectors = store.vectors.astype(_F32, copy=False)
        for row, record_id in enumerate(store.ids):
            raw = record_id.encode("utf-8")
            fh.write(_ID_LEN.pack(len(raw)))
            fh.write(raw)
            fh.write(vectors[row].tobytes())


def read_binary(path: str | Path, kind: str = "fused") -> EmbeddingStore:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedHeaderError(f"{path}: file too short for an EMB1 header ({len(data)} bytes)")
    return _parse_binary(memoryview(data), path, kind)


def _parse_binary(buf: memoryview, path: Path, kind: str) -> EmbeddingStore:
    try:
        magic, dim, count = _HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise MalformedHeaderError(f"{path}: bad magic {bytes(magic)!r}, expected {MAGIC!r}")
        if dim < 1:
            raise MalformedHeaderError(f"{path}: header declares dimension {dim}")
        vec_bytes = dim * _F32.itemsize
        ids: list[str] = []
        vectors = np.empty((count, dim), dtype=np.float32) if count * vec_bytes <= len(buf) else None
        if vectors is None:
            raise MalformedHeaderError(f"{path}: header declares {count} records of dimension {dim}, file too short")
        seen: set[str] = set()
        offset = _HEADER.size
        for row in range(count):
            if offset + _ID_LEN.size > len(buf):
                raise MalformedHeaderError(f"{path}: truncated at record {row}")
            (id_len,) = _ID_LEN.unpack_from(buf, offset)
            offset += _ID_LEN.size
            end = offset + id_len + vec_bytes
            if end > len(buf):
                raise MalformedHeaderError(f"{path}: truncated at record {row}")
            try:
                record_id = bytes(buf[offset:offset + id_len]).decode("utf-8")
            except UnicodeDecodeError:
                raise MalformedHeaderError(f"{path}: record {row} id is not valid UTF-8") from None
            if record_id in seen:
                raise DuplicateIdError(f"{path}: duplicate id {record_id!r} at record {row}")
            seen.add(record_id)
            values = np.frombuffer(buf[offset + id_len:end], dtype=_F32)
            if not np.isfinite(values).all():
                raise NonFiniteValueError(f"{path}: record {record_id!r} has a non-finite component")
            vectors[row] = values
            ids.append(record_id)
            offset = end
        if offset != len(buf):
            raise MalformedHeaderError(f"{path}: {len(buf) - offset} trailing bytes after {count} records")
    except struct.error as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from None
    return EmbeddingStore(ids, vectors, kind)


def write_jsonl(store: EmbeddingStore, path: str | Path) -> None:
    # float32 -> python float is exact, and repr round-trips, so reloading is bit-exact
    with open(path, "w", encoding="utf-8") as fh:
        for record_id in store.ids:
            vector = [float(x) for x in store[record_id]]
            fh.write(json.dumps({"id": record_id, "vector": vector}) + "\n")


def read_jsonl(path: str | Path, kind: str = "fused") -> EmbeddingStore:
    ids: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                record_id, vector = row["id"], row["vector"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedHeaderError(f"{path}:{lineno}: malformed record ({exc})") from None
            if not isinstance(record_id, str) or not isinstance(vector, list):
                raise MalformedHeaderError(f"{path}:{lineno}: 'id' must be a string and 'vector' a list")
            if record_id in seen:
                raise DuplicateIdError(f"{path}:{lineno}: duplicate id {record_id!r}")
            if dim is None:
                dim = len(vector)
                if dim < 1:
                    raise EmbeddingDimensionError(f"{path}:{lineno}: record {record_id!r} has an empty vector")
            elif len(vector) != dim:
                raise EmbeddingDimensionError(
                    f"{path}:{lineno}: record {record_id!r} has dimension {len(vector)}, expected {dim}"
                )
            try:
                values = [float(x) for x in vector]
            except (TypeError, ValueError):
                raise MalformedHeaderError(f"{path}:{lineno}: record {record_id!r} has a non-numeric component") from None
            # also catches finite float64 values that overflow float32
            with np.errstate(over="ignore"):
                as32 = np.asarray(values, dtype=np.float32)
            if not all(math.isfinite(x) for x in values) or not np.isfinite(as32).all():
                raise NonFiniteValueError(f"{path}:{lineno}: record {record_id!r} has a non-finite component")
            seen.add(record_id)
            ids.append(record_id)
            rows.append(values)
    if dim is None:
        raise MalformedHeaderError(f"{path}: no records; a JSONL store cannot declare its dimension when empty")
    return EmbeddingStore(ids, np.asarray(rows, dtype=np.float32), kind)


def _resolve_format(path: str | Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = "jsonl" if str(path).endswith((".jsonl", ".json")) else "binary"
    if fmt not in ("binary", "jsonl"):
        raise InvalidInputError(f"unknown embedding format {fmt!r}")
    return fmt


def load_store(path: str | Path, format: str | None = None, kind: str = "fused") -> EmbeddingStore:
    """Read a store; ``format`` is ``"binary"`` or ``"jsonl"`` (guessed from the suffix if omitted)."""
    if _resolve_format(path, format) == "jsonl":
        return read_jsonl(path, kind)
    return read_binary(path, kind)


def save_store(store: EmbeddingStore, path: str | Path, format: str | None = None) -> None:
    if _resolve_format(path, format) == "jsonl":
        write_jsonl(store, path)
    else:
        write_binary(store, path)


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cannot add vectors of shapes {a.shape} and {b.shape}")


def fuse_features(precomputed, raw=None) -> np.ndarray:
    """Frame-feature fusion: frozen feature plus trainable feature.

    A missing raw feature (e.g. the source video is unavailable) is treated
    as the zero vector, so the result is the precomputed feature itself.
    """
    precomputed = np.asarray(precomputed, dtype=np.float64)
    if raw is None:
        return precomputed.copy()
    raw = np.asarray(raw, dtype=np.float64)
    _check_same_dim(precomputed, raw)
    return precomputed + raw


def fuse_modalities(visual, subtitle) -> np.ndarray:
    visual = np.asarray(visual, dtype=np.float64)
    subtitle = np.asarray(subtitle, dtype=np.float64)
    _check_same_dim(visual, subtitle)
    return visual + subtitle


def fuse_stores(precomputed: EmbeddingStore, raw: EmbeddingStore | None = None, subtitle: EmbeddingStore | None = None) -> EmbeddingStore:
    """Build the final video encoding for every id in ``precomputed``.

    Ids absent from ``raw`` fall back to the zero raw feature; ``subtitle``, if
    given, must cover every id.
    """
    dim = precomputed.dimension
    for other in (raw, subtitle):
        if other is not None and other.dimension != dim:
            raise DimensionMismatchError(f"store dimension {other.dimension} does not match {dim}")
    out = np.empty((len(precomputed), dim), dtype=np.float64)
    for row, record_id in enumerate(precomputed.ids):
        visual = fuse_features(precomputed[record_id], None if raw is None else raw.get(record_id))
        if subtitle is not None:
            visual = fuse_modalities(visual, subtitle[record_id])
        out[row] = visual
    return EmbeddingStore(precomputed.ids, out, "fused")
