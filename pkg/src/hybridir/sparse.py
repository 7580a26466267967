"""Inverted index with Okapi BM25 ranking and a tf-idf vectorizer.

Index file grammar ("SIX1"): 4-byte magic, u16 LE version, then three
length-prefixed sections (u32 LE byte length each): analyzer config as JSON,
collection statistics, and varint-encoded postings.
"""

from __future__ import annotations

import io
import json
import math
import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import AnalyzerConfig, Corpus, Vocab, document_text, tokenize
from .dense import ScoredList
from .errors import DataError, FormatError

INDEX_MAGIC = b"SIX1"
INDEX_VERSION = 1


@dataclass
class InvertedIndex:
    """Term -> (doc ordinal, term frequency) postings plus BM25 statistics.

    Immutable after build; scoring is read-only.
    """

    postings: dict[str, list[tuple[int, int]]]
    doc_len: list[int]
    avg_doc_len: float
    n_docs: int
    doc_ids: list[str]
    analyzer: AnalyzerConfig
    k1: float
    b: float

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        if df == 0:
            return 0.0
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


@dataclass(frozen=True)
class SparseVector:
    """L2-normalized (term ordinal, weight) pairs, ordinals strictly increasing."""

    entries: tuple[tuple[int, float], ...]

    def to_dense(self, size: int) -> np.ndarray:
        vec = np.zeros(size, dtype=np.float64)
        for ordinal, weight in self.entries:
            vec[ordinal] = weight
        return vec


def _mean_length(doc_len: list[int]) -> float:
    return math.fsum(doc_len) / len(doc_len)


def build_index(
    corpus: Corpus, cfg: AnalyzerConfig, k1: float = 1.2, b: float = 0.75
) -> InvertedIndex:
    """Index each document's sentence concatenated with its context (if any)."""
    if len(corpus) == 0:
        raise DataError("cannot index an empty corpus")
    if k1 <= 0:
        raise DataError("k1 must be positive")
    if not 0.0 <= b <= 1.0:
        raise DataError("b must lie in [0, 1]")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_len: list[int] = []
    doc_ids: list[str] = []
    for ordinal, doc in enumerate(corpus):
        tokens = tokenize(document_text(doc), cfg)
        doc_len.append(len(tokens))
        doc_ids.append(doc.id)
        for term, freq in sorted(Counter(tokens).items()):
            postings.setdefault(term, []).append((ordinal, freq))
    return InvertedIndex(
        postings=postings,
        doc_len=doc_len,
        avg_doc_len=_mean_length(doc_len),
        n_docs=len(corpus),
        doc_ids=doc_ids,
        analyzer=cfg,
        k1=k1,
        b=b,
    )


def bm25_topk(index: InvertedIndex, query: str, k: int) -> ScoredList:
    """Top-k documents by BM25; documents sharing no query term are omitted.

    score(q, d) = sum over shared terms of
        idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg_len))
    with idf(t) = ln(1 + (n_docs - df + 0.5) / (df + 0.5)).
    """
    if k < 1:
        raise DataError("k must be >= 1")
    scores: dict[int, float] = {}
    # sorted unique terms keep float accumulation order deterministic
    for term in sorted(set(tokenize(query, index.analyzer))):
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for ordinal, tf in plist:
            norm = tf + index.k1 * (
                1.0 - index.b + index.b * index.doc_len[ordinal] / index.avg_doc_len
            )
            scores[ordinal] = scores.get(ordinal, 0.0) + idf * tf * (index.k1 + 1.0) / norm
    ranked = sorted(scores.items(), key=lambda item: (-item[1], index.doc_ids[item[0]]))
    return [(index.doc_ids[o], s) for o, s in ranked[:k]]


def tfidf_vector(vocab: Vocab, text: str, cfg: AnalyzerConfig) -> SparseVector:
    """Smooth-idf tf-idf of the text over the vocabulary, L2-normalized.

    weight(t) = tf(t) * (ln((1 + n_docs) / (1 + df(t))) + 1); out-of-vocabulary
    terms are dropped. Returns an empty vector when nothing survives.
    """
    if len(vocab) == 0:
        raise DataError("vocabulary is empty")
    counts = Counter(t for t in tokenize(text, cfg) if t in vocab.index)
    if not counts:
        return SparseVector(entries=())
    raw: list[tuple[int, float]] = []
    for term, tf in counts.items():
        idf = math.log((1.0 + vocab.n_docs) / (1.0 + vocab.doc_freq[term])) + 1.0
        raw.append((vocab.index[term], tf * idf))
    raw.sort()
    norm = math.sqrt(math.fsum(w * w for _, w in raw))
    return SparseVector(entries=tuple((o, w / norm) for o, w in raw))


# --- persistence -----------------------------------------------------------


def _write_uvarint(buf: io.BytesIO, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.write(bytes((byte | 0x80,)))
        else:
            buf.write(bytes((byte,)))
            return


def _read_uvarint(view: memoryview, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(view):
            raise FormatError("truncated varint")
        byte = view[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7


def save_index(index: InvertedIndex, path: str | Path) -> None:
    sections: list[bytes] = []

    sections.append(json.dumps(index.analyzer.to_dict(), sort_keys=True).encode("utf-8"))

    stats = io.BytesIO()
    stats.write(struct.pack("<Idd", index.n_docs, index.k1, index.b))
    stats.write(struct.pack(f"<{index.n_docs}I", *index.doc_len))
    for doc_id in index.doc_ids:
        raw = doc_id.encode("utf-8")
        _write_uvarint(stats, len(raw))
        stats.write(raw)
    sections.append(stats.getvalue())

    post = io.BytesIO()
    post.write(struct.pack("<I", len(index.postings)))
    for term in sorted(index.postings):
        raw = term.encode("utf-8")
        _write_uvarint(post, len(raw))
        post.write(raw)
        plist = index.postings[term]
        _write_uvarint(post, len(plist))
        prev = 0
        for ordinal, tf in plist:
            _write_uvarint(post, ordinal - prev)
            _write_uvarint(post, tf)
            prev = ordinal
    sections.append(post.getvalue())

    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<H", INDEX_VERSION))
        for payload in sections:
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)


def load_index(path: str | Path) -> InvertedIndex:
    data = Path(path).read_bytes()
    if len(data) < 6:
        raise FormatError(f"{path}: truncated header")
    if data[:4] != INDEX_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {INDEX_MAGIC!r}")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != INDEX_VERSION:
        raise FormatError(f"{path}: unsupported index version {version}")

    pos = 6
    sections: list[bytes] = []
    for _ in range(3):
        if pos + 4 > len(data):
            raise FormatError(f"{path}: truncated section header")
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + length > len(data):
            raise FormatError(f"{path}: truncated section payload")
        sections.append(data[pos : pos + length])
        pos += length
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")

    analyzer = AnalyzerConfig.from_dict(json.loads(sections[0].decode("utf-8")))

    stats = memoryview(sections[1])
    n_docs, k1, b = struct.unpack_from("<Idd", stats, 0)
    offset = struct.calcsize("<Idd")
    doc_len = list(struct.unpack_from(f"<{n_docs}I", stats, offset))
    offset += 4 * n_docs
    doc_ids: list[str] = []
    for _ in range(n_docs):
        length, offset = _read_uvarint(stats, offset)
        doc_ids.append(bytes(stats[offset : offset + length]).decode("utf-8"))
        offset += length

    post = memoryview(sections[2])
    (n_terms,) = struct.unpack_from("<I", post, 0)
    offset = 4
    postings: dict[str, list[tuple[int, int]]] = {}
    for _ in range(n_terms):
        length, offset = _read_uvarint(post, offset)
        term = bytes(post[offset : offset + length]).decode("utf-8")
        offset += length
        count, offset = _read_uvarint(post, offset)
        plist: list[tuple[int, int]] = []
        prev = 0
        for _ in range(count):
            delta, offset = _read_uvarint(post, offset)
            tf, offset = _read_uvarint(post, offset)
            prev += delta
            if prev >= n_docs:
                raise FormatError(f"{path}: posting ordinal {prev} out of range")
            plist.append((prev, tf))
        postings[term] = plist

    return InvertedIndex(
        postings=postings,
        doc_len=doc_len,
        avg_doc_len=_mean_length(doc_len),
        n_docs=n_docs,
        doc_ids=doc_ids,
        analyzer=analyzer,
        k1=k1,
        b=b,
    )
