"""Dataset ingestion, text analysis, and vocabulary construction.

Documents and queries arrive as JSONL (one object per line, UTF-8, LF).
The analyzer is deliberately simple and dependency-free: unicode lowercase,
split on non-alphanumeric runs, drop single-character tokens, remove
stopwords, then apply an s-stemmer.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import DataError

# Built-in English stopword list (129 function words), versioned with the
# package. Override per run via AnalyzerConfig(stopwords=load_stopwords(path)).
STOPWORDS: frozenset[str] = frozenset("""
a about above after again against all am an and any are as at be because been
before being below between both but by can did do does doing down during each
few for from further had has have having he her here hers herself him himself
his how i if in into is it its itself just me more most my myself no nor not
now of off on once only or other our ours ourselves out over own same she
should so some such than that the their theirs them themselves then there
these they this those through to too under until up very was we were what when
where which while who whom why will with you your yours yourself yourselves
""".split())

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class Document:
    """One candidate evidence sentence, optionally with its source paragraph."""

    id: str
    sentence: str
    context: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("document id must be nonempty")
        if not self.sentence:
            raise DataError(f"document {self.id!r}: sentence must be nonempty")


@dataclass(frozen=True)
class Query:
    qid: str
    text: str
    gold_id: str

    def __post_init__(self) -> None:
        if not self.qid:
            raise DataError("query qid must be nonempty")


@dataclass(frozen=True)
class AnalyzerConfig:
    """Text analysis switches shared by the index, the vectorizer and the probe."""

    lowercase: bool = True
    stem: bool = True
    stopwords: frozenset[str] = STOPWORDS
    min_count: int = 1

    def __post_init__(self) -> None:
        if self.min_count < 0:
            raise DataError("min_count must be >= 0")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def fingerprint(self) -> str:
        """Stable digest used to guard router models against analyzer drift."""
        payload = json.dumps(
            {
                "lowercase": self.lowercase,
                "stem": self.stem,
                "stopwords": sorted(self.stopwords),
                "min_count": self.min_count,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "stem": self.stem,
            "stopwords": sorted(self.stopwords),
            "min_count": self.min_count,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AnalyzerConfig":
        return cls(
            lowercase=bool(obj["lowercase"]),
            stem=bool(obj["stem"]),
            stopwords=frozenset(obj["stopwords"]),
            min_count=int(obj["min_count"]),
        )


class Corpus:
    """Immutable collection of documents with unique ids."""

    def __init__(self, documents: Iterable[Document]):
        docs = tuple(documents)
        by_id: dict[str, Document] = {}
        for doc in docs:
            if doc.id in by_id:
                raise DataError(f"duplicate document id {doc.id!r}")
            by_id[doc.id] = doc
        self.documents = docs
        self._by_id = by_id

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise DataError(f"unknown document id {doc_id!r}") from None


@dataclass(frozen=True)
class Vocab:
    """Term inventory with document frequencies.

    Ordinals are assigned by lexicographic term order, so the mapping is a
    bijection and reproducible from the corpus alone.
    """

    terms: tuple[str, ...]
    index: dict[str, int]
    doc_freq: dict[str, int]
    n_docs: int
    analyzer: AnalyzerConfig

    def __len__(self) -> int:
        return len(self.terms)


def stem_token(token: str) -> str:
    """S-stemmer: 'ies'->'y', trailing 's' of 'es'/plain plurals dropped.

    Never reduces a token below two characters; 'ss'/'us' endings are left
    alone so stemming is idempotent.
    """
    if token.endswith("ies") and len(token) >= 4:
        return token[:-3] + "y"
    if token.endswith("es") and len(token) >= 3:
        return token[:-1]
    if token.endswith("s") and not token.endswith(("ss", "us")) and len(token) >= 3:
        return token[:-1]
    return token


def tokenize(text: str, cfg: AnalyzerConfig) -> list[str]:
    """Analyze text into a term sequence. Deterministic; empty in, empty out."""
    if cfg.lowercase:
        text = text.lower()
    out: list[str] = []
    for tok in _TOKEN_RE.findall(text):
        if len(tok) < 2 or tok in cfg.stopwords:
            continue
        if cfg.stem:
            tok = stem_token(tok)
            # a stemmed form may collide with a stopword ("ins" -> "in")
            if tok in cfg.stopwords:
                continue
        out.append(tok)
    return out


def document_text(doc: Document) -> str:
    """Indexed text: sentence followed by its context when one is present."""
    if doc.context:
        return doc.sentence + "\n" + doc.context
    return doc.sentence


def build_vocab(corpus: Corpus, queries: Sequence[Query], cfg: AnalyzerConfig) -> Vocab:
    """Build the term inventory from the corpus.

    Query text never adds vocabulary; the cutoff applies to document
    frequency. Raises if the corpus is empty or filtering removes every term.
    """
    if len(corpus) == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(tokenize(document_text(doc), cfg)))
    kept = {t: c for t, c in df.items() if c >= cfg.min_count}
    if not kept:
        raise DataError(
            f"vocabulary is empty after applying min_count={cfg.min_count}"
        )
    terms = tuple(sorted(kept))
    return Vocab(
        terms=terms,
        index={t: i for i, t in enumerate(terms)},
        doc_freq=kept,
        n_docs=len(corpus),
        analyzer=cfg,
    )


def _iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _require(obj: dict, key: str, path, lineno: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise DataError(f"{path}:{lineno}: missing or non-string field {key!r}")
    return value


def load_corpus(path: str | Path) -> Corpus:
    docs: list[Document] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        doc_id = _require(obj, "id", path, lineno)
        sentence = _require(obj, "sentence", path, lineno)
        context = obj.get("context")
        if context is not None and not isinstance(context, str):
            raise DataError(f"{path}:{lineno}: field 'context' must be string or null")
        if doc_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        docs.append(Document(id=doc_id, sentence=sentence, context=context))
    return Corpus(docs)


def load_queries(path: str | Path) -> list[Query]:
    queries: list[Query] = []
    seen: set[str] = set()
    for lineno, obj in _iter_jsonl(path):
        qid = _require(obj, "qid", path, lineno)
        text = _require(obj, "text", path, lineno)
        gold_id = _require(obj, "gold_id", path, lineno)
        if qid in seen:
            raise DataError(f"{path}:{lineno}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append(Query(qid=qid, text=text, gold_id=gold_id))
    return queries


def load_dataset(corpus_path: str | Path, queries_path: str | Path) -> tuple[Corpus, list[Query]]:
    """Load a corpus file and a queries file, validating both."""
    return load_corpus(corpus_path), load_queries(queries_path)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Read one stopword per line; blank lines ignored."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if word:
                words.add(word)
    return frozenset(words)


def save_vocab(vocab: Vocab, path: str | Path) -> None:
    payload = {
        "analyzer": vocab.analyzer.to_dict(),
        "n_docs": vocab.n_docs,
        "terms": list(vocab.terms),
        "doc_freq": [vocab.doc_freq[t] for t in vocab.terms],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_vocab(path: str | Path) -> Vocab:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    terms = tuple(obj["terms"])
    freqs = obj["doc_freq"]
    if len(terms) != len(freqs):
        raise DataError(f"{path}: terms/doc_freq length mismatch")
    return Vocab(
        terms=terms,
        index={t: i for i, t in enumerate(terms)},
        doc_freq=dict(zip(terms, freqs)),
        n_docs=int(obj["n_docs"]),
        analyzer=AnalyzerConfig.from_dict(obj["analyzer"]),
    )
