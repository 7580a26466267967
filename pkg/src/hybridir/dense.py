"""Precomputed-embedding store, exact dot-product retrieval, and sum fusion.

Embedding file grammar ("EMB1"): 4-byte magic, u32 LE vector count, u32 LE
dimension, then count*dim float32 LE values in row-major order. The ids
sidecar holds one UTF-8 id per LF-terminated line, row-aligned.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, FormatError

EMB_MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")

# Shared result shape of every retriever: (doc id, score), score descending,
# ties broken by ascending id.
ScoredList = list[tuple[str, float]]


@dataclass
class EmbeddingStore:
    """Id-aligned dense vectors; row i of `matrix` belongs to `ids[i]`."""

    dim: int
    ids: tuple[str, ...]
    matrix: np.ndarray
    _row: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        if self.matrix.ndim != 2 or self.matrix.shape != (len(self.ids), self.dim):
            raise DataError(
                f"embedding matrix shape {self.matrix.shape} does not match "
                f"{len(self.ids)} ids of dimension {self.dim}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise DataError("embedding matrix contains non-finite values")
        self._row = {}
        for i, vec_id in enumerate(self.ids):
            if vec_id in self._row:
                raise DataError(f"duplicate embedding id {vec_id!r}")
            self._row[vec_id] = i

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, vec_id: str) -> bool:
        return vec_id in self._row

    def vector(self, vec_id: str) -> np.ndarray:
        try:
            return self.matrix[self._row[vec_id]]
        except KeyError:
            raise DataError(f"unknown embedding id {vec_id!r}") from None


def save_embeddings(
    ids: Sequence[str], matrix: np.ndarray, vec_path: str | Path, ids_path: str | Path
) -> None:
    """Write the EMB1 file and its id sidecar."""
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids):
        raise DataError("matrix rows must align with ids")
    with open(vec_path, "wb") as fh:
        fh.write(_HEADER.pack(EMB_MAGIC, matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())
    with open(ids_path, "w", encoding="utf-8", newline="\n") as fh:
        for vec_id in ids:
            fh.write(vec_id + "\n")


def load_embeddings(vec_path: str | Path, ids_path: str | Path) -> EmbeddingStore:
    data = Path(vec_path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{vec_path}: truncated header")
    magic, count, dim = _HEADER.unpack_from(data)
    if magic != EMB_MAGIC:
        raise FormatError(f"{vec_path}: bad magic {magic!r}, expected {EMB_MAGIC!r}")
    expected = _HEADER.size + 4 * count * dim
    if len(data) != expected:
        raise FormatError(
            f"{vec_path}: payload size mismatch, expected {expected} bytes "
            f"for {count}x{dim}, found {len(data)}"
        )
    matrix = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).reshape(count, dim).copy()
    if not np.all(np.isfinite(matrix)):
        raise DataError(f"{vec_path}: non-finite value in payload")

    text = Path(ids_path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != count:
        raise FormatError(
            f"{ids_path}: {len(lines)} ids for {count} vectors in {vec_path}"
        )
    if any(not line for line in lines):
        raise DataError(f"{ids_path}: empty id line")
    return EmbeddingStore(dim=dim, ids=tuple(lines), matrix=matrix)


def dense_topk(store: EmbeddingStore, query_vec: np.ndarray, k: int) -> ScoredList:
    """Exact top-k by dot product; ties resolved by ascending id."""
    if k < 1:
        raise DataError("k must be >= 1")
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (store.dim,):
        raise DataError(
            f"query vector dimension {q.shape} does not match store dim {store.dim}"
        )
    scores = store.matrix.astype(np.float64) @ q
    order = np.lexsort((np.asarray(store.ids), -scores))[: min(k, len(store.ids))]
    return [(store.ids[i], float(scores[i])) for i in order]


def sum_fusion(sparse: ScoredList, dense: ScoredList, k: int) -> ScoredList:
    """Softmax-normalize each list independently, then rank by summed score.

    Documents absent from one list contribute zero from that side.
    """
    from .routing import softmax_normalize

    if k < 1:
        raise DataError("k must be >= 1")
    fused: dict[str, float] = {}
    for entries in (sparse, dense):
        if not entries:
            continue
        probs = softmax_normalize([s for _, s in entries], k=len(entries))
        for (doc_id, _), p in zip(entries, probs):
            fused[doc_id] = fused.get(doc_id, 0.0) + float(p)
    ranked = sorted(fused.items(), key=lambda item: (-item[1], item[0]))
    return ranked[:k]
