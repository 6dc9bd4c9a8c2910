"""Feature matrices from proportions, precomputed image embeddings and graph
embeddings, aligned on a shared set of image ids.

Embedding files are either CSV (``image_id,v0,...,v{d-1}``, a header row is
expected) or the binary ``ICOEMB1`` layout::

    b"ICOEMB1"                     7-byte magic
    uint32 rows, uint32 dim        little-endian
    per row: uint16 id_len, id (utf-8), dim x float64 (little-endian)
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Collection, Iterable, Sequence

import numpy as np

from .catalog import TaskLabeling
from .errors import EmptyIntersectionError, ParseError, ValidationError
from .iconometry import COMPONENTS, ProportionVector

log = logging.getLogger(__name__)

SOURCE_DIMS = {
    "iconometry": 6,
    "image_embedding_full": 2048,
    "image_embedding_cropped": 2048,
    "image_embedding_face": 2048,
    "graph_kg": 128,
    "graph_kg_time": 128,
}
SOURCES = tuple(SOURCE_DIMS)
MAGIC = b"ICOEMB1"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    source: str
    sample_ids: tuple[str, ...]
    matrix: np.ndarray
    excluded: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.source not in SOURCE_DIMS:
            raise ValidationError(f"unknown feature source {self.source!r}")
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != len(self.sample_ids):
            raise ValidationError("matrix rows must match sample_ids")
        if m.shape[1] != SOURCE_DIMS[self.source]:
            raise ValidationError(
                f"{self.source} features have {SOURCE_DIMS[self.source]} columns, "
                f"got {m.shape[1]}"
            )
        if not np.isfinite(m).all():
            raise ValidationError("non-finite feature value")
        ids = tuple(self.sample_ids)
        if list(ids) != sorted(set(ids)):
            raise ValidationError("sample_ids must be sorted and unique")
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def rows(self, ids: Sequence[str]) -> np.ndarray:
        index = {s: i for i, s in enumerate(self.sample_ids)}
        return self.matrix[[index[s] for s in ids]]


def from_rows(source: str, rows: dict[str, np.ndarray], excluded=()) -> FeatureMatrix:
    ids = sorted(rows)
    dim = SOURCE_DIMS[source]
    m = np.array([rows[i] for i in ids], dtype=np.float64).reshape(len(ids), dim)
    return FeatureMatrix(source, tuple(ids), m, tuple(excluded))


def _read_csv(path: Path) -> list[tuple[str, list[float], int]]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise ParseError("non-numeric feature value", line=lineno) from None
            out.append((row[0], values, lineno))
    return out


def _read_binary(path: Path) -> list[tuple[str, list[float], int]]:
    data = path.read_bytes()
    if not data.startswith(MAGIC):
        raise ParseError("missing ICOEMB1 header")
    try:
        rows, dim = struct.unpack_from("<II", data, len(MAGIC))
        pos = len(MAGIC) + 8
        out = []
        for r in range(rows):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            image_id = data[pos : pos + n].decode("utf-8")
            pos += n
            values = list(struct.unpack_from(f"<{dim}d", data, pos))
            pos += 8 * dim
            out.append((image_id, values, r))
    except struct.error:
        raise ParseError("truncated ICOEMB1 file") from None
    if pos != len(data):
        raise ParseError("trailing bytes after ICOEMB1 payload")
    return out


def read_vectors(path: str | Path) -> list[tuple[str, list[float], int]]:
    """Raw ``(id, values, line)`` rows of an embedding file in either format."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    return _read_binary(path) if head == MAGIC else _read_csv(path)


def ingest_embeddings(
    path: str | Path,
    source: str,
    known_ids: Collection[str] | None = None,
) -> FeatureMatrix:
    """Load precomputed vectors for one feature source.

    Rows whose id is not in ``known_ids`` (typically the catalog's image ids)
    are dropped and listed in ``FeatureMatrix.excluded``.
    """
    if source not in SOURCE_DIMS:
        raise ValidationError(f"unknown feature source {source!r}")
    raw = read_vectors(path)
    dim = SOURCE_DIMS[source]
    rows: dict[str, np.ndarray] = {}
    excluded = []
    for image_id, values, line in raw:
        if len(values) != dim:
            raise ValidationError(
                f"ragged dimensions: {image_id!r} (line {line}) has {len(values)} "
                f"values, expected {dim}"
            )
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"non-finite value for {image_id!r} (line {line})")
        if image_id in rows:
            raise ValidationError(f"duplicate id {image_id!r} (line {line})")
        if known_ids is not None and image_id not in known_ids:
            excluded.append(image_id)
            continue
        rows[image_id] = np.asarray(values)
    if excluded:
        log.warning("%s: %d id(s) not in catalog excluded", Path(path).name, len(excluded))
    return from_rows(source, rows, sorted(excluded))


def write_embeddings(
    ids: Sequence[str], matrix: np.ndarray, path: str | Path, binary: bool = False
):
    path = Path(path)
    matrix = np.asarray(matrix, dtype=np.float64)
    if binary:
        parts = [MAGIC, struct.pack("<II", len(ids), matrix.shape[1])]
        for image_id, row in zip(ids, matrix):
            raw = image_id.encode("utf-8")
            parts.append(struct.pack("<H", len(raw)) + raw)
            parts.append(row.astype("<f8").tobytes())
        path.write_bytes(b"".join(parts))
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", *(f"v{i}" for i in range(matrix.shape[1]))])
        for image_id, row in zip(ids, matrix):
            writer.writerow([image_id, *(repr(float(v)) for v in row)])


def iconometry_features(vectors: Iterable[ProportionVector]) -> FeatureMatrix:
    """Proportions as a 6-column matrix (lh, rh, el, e, n, lf)."""
    rows: dict[str, np.ndarray] = {}
    for v in vectors:
        if v.image_id in rows:
            raise ValidationError(f"duplicate image_id {v.image_id!r}")
        rows[v.image_id] = np.array([getattr(v, c) for c in COMPONENTS])
    return from_rows("iconometry", rows)


@dataclass
class AlignedData:
    sample_ids: tuple[str, ...]
    matrices: list[np.ndarray]
    y: np.ndarray  # class indices (single-label) or indicator matrix (multi-label)
    classes: list
    mode: str


def encode_labels(labeling: TaskLabeling, ids: Sequence[str]) -> tuple[np.ndarray, list]:
    classes = sorted({lab for s in ids for lab in labeling.labels[s]})
    pos = {c: i for i, c in enumerate(classes)}
    if labeling.mode == "single_label":
        y = np.array([pos[next(iter(labeling.labels[s]))] for s in ids], dtype=np.int64)
    else:
        y = np.zeros((len(ids), len(classes)), dtype=np.int64)
        for r, s in enumerate(ids):
            for lab in labeling.labels[s]:
                y[r, pos[lab]] = 1
    return y, classes


def common_universe(matrices: Sequence[FeatureMatrix], labeling: TaskLabeling) -> AlignedData:
    """Rows shared by every matrix and the labeling, in sorted id order."""
    if not matrices:
        raise ValueError("need at least one feature matrix")
    contributors = [(m.source, set(m.sample_ids)) for m in matrices]
    contributors.append((labeling.task_id, set(labeling.labels)))
    shared = set.intersection(*(s for _, s in contributors))
    if not shared:
        name, smallest = min(contributors, key=lambda c: len(c[1]))
        raise EmptyIntersectionError(
            f"no shared samples; smallest contributor is {name!r} ({len(smallest)} ids)"
        )
    ids = tuple(sorted(shared))
    y, classes = encode_labels(labeling, ids)
    return AlignedData(ids, [m.rows(ids) for m in matrices], y, classes, labeling.mode)
