"""End-to-end retrieval pipelines shared by the CLI, the service, and tests.

A RetrievalEngine binds an inverted index, optional embedding stores, and an
optional router model, and exposes the four query pipelines: sparse, dense,
sum fusion, and the routed hybrid. The hybrid runs BM25 once, extracts the
feature ladder from the normalized top scores, routes, and calls the dense
side only when the router picks it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import Query
from .dense import EmbeddingStore, ScoredList, dense_topk, sum_fusion
from .errors import DataError
from .evaluation import RankRecord, gold_rank
from .routing import (
    DEFAULT_TOP_K,
    FeatureSpec,
    Route,
    RouterModel,
    feature_variants,
    route,
    softmax_normalize,
)
from .sparse import InvertedIndex, bm25_topk

SYSTEM_CHOICES = ("sparse", "dense", "fusion", "hybrid")


@dataclass
class RetrievalEngine:
    index: InvertedIndex
    doc_store: EmbeddingStore | None = None
    query_store: EmbeddingStore | None = None
    router_model: RouterModel | None = None
    k: int = 64                     # result depth
    feature_k: int = DEFAULT_TOP_K  # normalization depth for router features
    dense_delay_s: float = 0.0      # benchmarking knob: emulates a slow encoder

    def __post_init__(self) -> None:
        if self.k < 1:
            raise DataError("k must be >= 1")
        if self.router_model is not None and self.router_model.analyzer_hash:
            if self.router_model.analyzer_hash != self.index.analyzer.fingerprint():
                raise DataError(
                    "router model was fitted against a different analyzer "
                    "configuration than this index"
                )

    # --- individual pipelines ---

    def run_sparse(self, query: Query, k: int | None = None) -> ScoredList:
        return bm25_topk(self.index, query.text, k or self.k)

    def query_vector(self, query: Query) -> np.ndarray:
        if self.query_store is None:
            raise DataError("no query embeddings loaded")
        return self.query_store.vector(query.qid)

    def run_dense(self, query: Query, k: int | None = None) -> ScoredList:
        if self.doc_store is None:
            raise DataError("no document embeddings loaded")
        vec = self.query_vector(query)
        if self.dense_delay_s > 0.0:
            time.sleep(self.dense_delay_s)
        return dense_topk(self.doc_store, vec, k or self.k)

    def run_fusion(self, query: Query, k: int | None = None) -> ScoredList:
        k = k or self.k
        return sum_fusion(self.run_sparse(query, k), self.run_dense(query, k), k)

    # --- routing ---

    def _sparse_with_features(self, query: Query, depth: int) -> tuple[ScoredList, np.ndarray, float]:
        sparse_list = bm25_topk(self.index, query.text, depth)
        top = softmax_normalize([s for _, s in sparse_list], k=self.feature_k)
        f0 = float(top[0]) if top.size else 0.0
        return sparse_list, top, f0

    def _dense_ladder(self, query: Query) -> np.ndarray:
        scores = [s for _, s in self.run_dense(query, self.feature_k)]
        return softmax_normalize(scores, k=self.feature_k)

    def features_for(self, query: Query, spec: FeatureSpec) -> tuple[np.ndarray, float]:
        """Router features for one query plus f[0] of the sparse ladder."""
        _, sparse_top, f0 = self._sparse_with_features(query, self.feature_k)
        dense_top = self._dense_ladder(query) if spec.uses_dense else np.empty(0)
        return feature_variants(sparse_top, dense_top, spec), f0

    def run_hybrid(self, query: Query, k: int | None = None) -> tuple[ScoredList, Route, float]:
        """BM25 once for candidates and features; dense only when routed there."""
        if self.router_model is None:
            raise DataError("no router model loaded")
        k = k or self.k
        spec = self.router_model.feature_spec
        sparse_list, sparse_top, f0 = self._sparse_with_features(query, max(k, self.feature_k))
        dense_top = self._dense_ladder(query) if spec.uses_dense else np.empty(0)
        features = feature_variants(sparse_top, dense_top, spec)
        choice = route(self.router_model, features)
        if choice is Route.SPARSE:
            return sparse_list[:k], choice, f0
        return self.run_dense(query, k), choice, f0

    def runner(self, system: str) -> Callable[[Query], object]:
        """Single-query callable for the timing harness."""
        if system == "sparse":
            return self.run_sparse
        if system == "dense":
            return self.run_dense
        if system == "fusion":
            return self.run_fusion
        if system == "hybrid":
            return self.run_hybrid
        raise DataError(f"unknown system {system!r}; expected one of {SYSTEM_CHOICES}")

    # --- batch evaluation ---

    def validate_gold(self, queries: Sequence[Query]) -> None:
        known = set(self.index.doc_ids)
        for query in queries:
            if query.gold_id not in known:
                raise DataError(
                    f"query {query.qid!r}: gold_id {query.gold_id!r} not in corpus"
                )

    def evaluate(self, queries: Sequence[Query]) -> list[RankRecord]:
        """Rank the gold document under every available system per query."""
        self.validate_gold(queries)
        has_dense = self.doc_store is not None and self.query_store is not None
        records: list[RankRecord] = []
        for query in queries:
            sparse_list, sparse_top, f0 = self._sparse_with_features(
                query, max(self.k, self.feature_k)
            )
            rank = gold_rank(sparse_list[: self.k], query.gold_id)
            record = RankRecord(qid=query.qid, sparse_rank=rank, dense_rank=None, f0=f0)
            if has_dense:
                record.dense_rank = gold_rank(self.run_dense(query), query.gold_id)
            if self.router_model is not None:
                spec = self.router_model.feature_spec
                dense_top = self._dense_ladder(query) if spec.uses_dense else np.empty(0)
                features = feature_variants(sparse_top, dense_top, spec)
                record.routed = route(self.router_model, features)
                record.routed_rank = (
                    record.sparse_rank if record.routed is Route.SPARSE else record.dense_rank
                )
            records.append(record)
        return records
