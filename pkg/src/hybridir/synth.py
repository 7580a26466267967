"""Synthetic retrieval workload with a learnable routing signal.

Two query populations of equal size:

- "overlap" queries copy several content terms from their gold document, so
  BM25 ranks the gold first with a high normalized top score, while the mock
  dense embeddings point at a decoy document and push the gold to the bottom.
- "paraphrase" queries share no term with their gold document (BM25 cannot
  find it), while the mock embeddings put the gold first.

Mock embeddings use one orthogonal basis vector per document, and every query
vector has the same structure: one strong anchor (weight 1.0) and one
repelled document (weight -0.3), with no noise. Dense score profiles are
therefore bit-identical across queries and carry zero routing signal; only
which document sits at the top differs, and only BM25's normalized top
scores separate the two populations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus, Document, Query, STOPWORDS
from .dense import save_embeddings

_SYLLABLES = tuple(
    c + v for c in "bdfgklmnprtvz" for v in "aeiou"
)

ANCHOR_WEIGHT = 1.0
REPEL_WEIGHT = -0.3
CONTENT_TERMS_PER_DOC = 6
COMMON_TERMS_PER_DOC = 2
COMMON_POOL_SIZE = 10
OVERLAP_SHARED_TERMS = 4


@dataclass
class SynthWorkload:
    corpus: Corpus
    queries: list[Query]
    fit_queries: list[Query]
    eval_queries: list[Query]
    doc_ids: list[str]
    doc_matrix: np.ndarray
    query_ids: list[str]
    query_matrix: np.ndarray
    seed: int


def _word_factory(rng: np.random.Generator):
    used: set[str] = set()

    def fresh() -> str:
        while True:
            parts = rng.integers(0, len(_SYLLABLES), size=3)
            word = "".join(_SYLLABLES[i] for i in parts)
            if word not in used and word not in STOPWORDS:
                used.add(word)
                return word

    return fresh


def generate_workload(
    seed: int = 0, n_docs: int = 200, n_queries: int = 400, dim: int | None = None
) -> SynthWorkload:
    """Build the corpus, queries, and mock embeddings.

    Queries alternate overlap/paraphrase; the fit/eval halves interleave so
    both contain an equal number of each population. `dim` defaults to
    n_docs (one orthogonal basis vector per document).
    """
    if n_docs < COMMON_POOL_SIZE or n_queries < 4:
        raise ValueError("workload too small")
    if dim is None:
        dim = n_docs
    if dim < n_docs:
        raise ValueError("dim must be >= n_docs for the orthogonal doc basis")
    rng = np.random.default_rng(seed)
    fresh_word = _word_factory(rng)

    common_pool = [fresh_word() for _ in range(COMMON_POOL_SIZE)]
    doc_content: list[list[str]] = []
    doc_commons: list[list[str]] = []
    docs: list[Document] = []
    for i in range(n_docs):
        content = [fresh_word() for _ in range(CONTENT_TERMS_PER_DOC)]
        commons = [common_pool[j] for j in rng.choice(COMMON_POOL_SIZE, 2, replace=False)]
        tokens = content + commons
        rng.shuffle(tokens)
        doc_content.append(content)
        doc_commons.append(commons)
        docs.append(Document(id=f"d{i:04d}", sentence=" ".join(tokens), context=None))
    corpus = Corpus(docs)

    # orthogonal document basis: doc i -> e_i
    doc_matrix = np.zeros((n_docs, dim), dtype=np.float64)
    doc_matrix[np.arange(n_docs), np.arange(n_docs)] = 1.0

    queries: list[Query] = []
    query_vecs = np.zeros((n_queries, dim), dtype=np.float64)
    for j in range(n_queries):
        gold = int(rng.integers(0, n_docs))
        qid = f"q{j:04d}"
        if j % 2 == 0:
            # overlap: share content terms with the gold; embeddings anchor a
            # decoy and repel the gold, so the dense side is no help
            shared = [
                doc_content[gold][t]
                for t in rng.choice(CONTENT_TERMS_PER_DOC, OVERLAP_SHARED_TERMS, replace=False)
            ]
            tokens = shared + [fresh_word() for _ in range(2)]
            anchor = int((gold + 1 + rng.integers(0, n_docs - 1)) % n_docs)
            repel = gold
        else:
            # paraphrase: no shared term with the gold; embeddings anchor the
            # gold and repel a random other document
            tokens = [fresh_word() for _ in range(4)]
            if j % 8 != 1:  # some paraphrase queries match nothing at all
                candidates = [w for w in common_pool if w not in doc_commons[gold]]
                tokens.append(candidates[int(rng.integers(0, len(candidates)))])
            anchor = gold
            repel = int((gold + 1 + rng.integers(0, n_docs - 1)) % n_docs)
        rng.shuffle(tokens)
        queries.append(Query(qid=qid, text=" ".join(tokens), gold_id=docs[gold].id))
        query_vecs[j] = (
            ANCHOR_WEIGHT * doc_matrix[anchor] + REPEL_WEIGHT * doc_matrix[repel]
        )

    fit = [q for j, q in enumerate(queries) if (j // 2) % 2 == 0]
    evl = [q for j, q in enumerate(queries) if (j // 2) % 2 == 1]
    return SynthWorkload(
        corpus=corpus,
        queries=queries,
        fit_queries=fit,
        eval_queries=evl,
        doc_ids=[d.id for d in docs],
        doc_matrix=doc_matrix,
        query_ids=[q.qid for q in queries],
        query_matrix=query_vecs,
        seed=seed,
    )


def write_workload(workload: SynthWorkload, outdir: str | Path) -> dict[str, str]:
    """Persist the workload; returns a name -> path map."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": outdir / "corpus.jsonl",
        "queries": outdir / "queries.jsonl",
        "queries_fit": outdir / "queries_fit.jsonl",
        "queries_eval": outdir / "queries_eval.jsonl",
        "doc_vectors": outdir / "docs.emb",
        "doc_ids": outdir / "docs.ids",
        "query_vectors": outdir / "queries.emb",
        "query_ids": outdir / "queries.ids",
        "manifest": outdir / "manifest.json",
    }
    with open(paths["corpus"], "w", encoding="utf-8", newline="\n") as fh:
        for doc in workload.corpus:
            fh.write(
                json.dumps(
                    {"id": doc.id, "sentence": doc.sentence, "context": doc.context},
                    sort_keys=True,
                )
                + "\n"
            )
    for name, queries in (
        ("queries", workload.queries),
        ("queries_fit", workload.fit_queries),
        ("queries_eval", workload.eval_queries),
    ):
        with open(paths[name], "w", encoding="utf-8", newline="\n") as fh:
            for q in queries:
                fh.write(
                    json.dumps(
                        {"qid": q.qid, "text": q.text, "gold_id": q.gold_id},
                        sort_keys=True,
                    )
                    + "\n"
                )
    save_embeddings(workload.doc_ids, workload.doc_matrix, paths["doc_vectors"], paths["doc_ids"])
    save_embeddings(
        workload.query_ids, workload.query_matrix, paths["query_vectors"], paths["query_ids"]
    )
    manifest = {
        "seed": workload.seed,
        "n_docs": len(workload.corpus),
        "n_queries": len(workload.queries),
        "dim": int(workload.doc_matrix.shape[1]),
    }
    paths["manifest"].write_text(json.dumps(manifest, sort_keys=True), encoding="utf-8")
    return {name: str(path) for name, path in paths.items()}
