"""FastAPI service wrapping the retrieval engine.

The service keeps one engine in memory (index, embedding stores, router) and
answers retrieval and routing requests. Batch jobs (index building, router
fitting, evaluation, probing) live in the CLI; this surface is for serving
queries. Run with: uvicorn hybridir.service:app
"""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .dense import dense_topk, load_embeddings, sum_fusion
from .errors import DataError
from .pipelines import RetrievalEngine
from .routing import Route, RouterModel, feature_variants, route, route_probability, softmax_normalize
from .sparse import bm25_topk, load_index


class HealthResponse(BaseModel):
    status: str
    version: str


class EngineConfig(BaseModel):
    index_path: str
    doc_vectors: Optional[str] = None
    doc_ids: Optional[str] = None
    query_vectors: Optional[str] = None
    query_ids: Optional[str] = None
    router_path: Optional[str] = None
    k: int = Field(default=10, ge=1)
    dense_delay_ms: float = Field(default=0.0, ge=0.0)


class EngineStats(BaseModel):
    n_docs: int
    n_terms: int
    avg_doc_len: float
    k1: float
    b: float
    dense_docs: Optional[int] = None
    dense_queries: Optional[int] = None
    router_kind: Optional[str] = None


class Hit(BaseModel):
    doc_id: str
    score: float


class RetrieveRequest(BaseModel):
    query: str
    system: Literal["sparse", "dense", "fusion", "hybrid"] = "sparse"
    k: Optional[int] = Field(default=None, ge=1)
    qid: Optional[str] = None
    vector: Optional[list[float]] = None


class RetrieveResponse(BaseModel):
    system: str
    route: Optional[str] = None
    f0: Optional[float] = None
    hits: list[Hit]


class RouteRequest(BaseModel):
    query: str
    qid: Optional[str] = None
    vector: Optional[list[float]] = None


class RouteResponse(BaseModel):
    choice: str
    probability: Optional[float] = None
    f0: float
    features: list[float]


def create_app() -> FastAPI:
    app = FastAPI(title="hybridir", version=__version__)
    app.state.engine = None

    def engine_or_409() -> RetrievalEngine:
        engine = app.state.engine
        if engine is None:
            raise HTTPException(status_code=409, detail="no engine loaded; POST /engine/load first")
        return engine

    def stats_of(engine: RetrievalEngine) -> EngineStats:
        return EngineStats(
            n_docs=engine.index.n_docs,
            n_terms=len(engine.index.postings),
            avg_doc_len=engine.index.avg_doc_len,
            k1=engine.index.k1,
            b=engine.index.b,
            dense_docs=None if engine.doc_store is None else len(engine.doc_store),
            dense_queries=None if engine.query_store is None else len(engine.query_store),
            router_kind=None if engine.router_model is None else engine.router_model.kind,
        )

    def query_vector(engine: RetrievalEngine, req) -> np.ndarray:
        if req.vector is not None:
            return np.asarray(req.vector, dtype=np.float64)
        if req.qid is not None and engine.query_store is not None:
            try:
                return np.asarray(engine.query_store.vector(req.qid), dtype=np.float64)
            except DataError as exc:
                raise HTTPException(status_code=404, detail=str(exc)) from None
        raise HTTPException(
            status_code=400,
            detail="dense retrieval needs 'vector' or a 'qid' present in the loaded query embeddings",
        )

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/engine/load", response_model=EngineStats)
    def engine_load(config: EngineConfig) -> EngineStats:
        try:
            index = load_index(config.index_path)
            doc_store = query_store = router = None
            if config.doc_vectors and config.doc_ids:
                doc_store = load_embeddings(config.doc_vectors, config.doc_ids)
            if config.query_vectors and config.query_ids:
                query_store = load_embeddings(config.query_vectors, config.query_ids)
            if config.router_path:
                router = RouterModel.load(config.router_path)
            engine = RetrievalEngine(
                index=index,
                doc_store=doc_store,
                query_store=query_store,
                router_model=router,
                k=config.k,
                dense_delay_s=config.dense_delay_ms / 1000.0,
            )
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        except DataError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None
        app.state.engine = engine
        return stats_of(engine)

    @app.get("/engine/stats", response_model=EngineStats)
    def engine_stats() -> EngineStats:
        return stats_of(engine_or_409())

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(req: RetrieveRequest) -> RetrieveResponse:
        engine = engine_or_409()
        k = req.k or engine.k
        if req.system == "sparse":
            hits = bm25_topk(engine.index, req.query, k)
            return RetrieveResponse(
                system="sparse", hits=[Hit(doc_id=d, score=s) for d, s in hits]
            )
        if engine.doc_store is None:
            raise HTTPException(status_code=400, detail="no document embeddings loaded")
        vec = query_vector(engine, req)
        if vec.shape != (engine.doc_store.dim,):
            raise HTTPException(
                status_code=400,
                detail=f"vector dimension {vec.shape[0]} != store dim {engine.doc_store.dim}",
            )
        if req.system == "dense":
            hits = dense_topk(engine.doc_store, vec, k)
            return RetrieveResponse(
                system="dense", hits=[Hit(doc_id=d, score=s) for d, s in hits]
            )
        if req.system == "fusion":
            hits = sum_fusion(
                bm25_topk(engine.index, req.query, k),
                dense_topk(engine.doc_store, vec, k),
                k,
            )
            return RetrieveResponse(
                system="fusion", hits=[Hit(doc_id=d, score=s) for d, s in hits]
            )
        # hybrid
        if engine.router_model is None:
            raise HTTPException(status_code=400, detail="no router model loaded")
        spec = engine.router_model.feature_spec
        sparse_list = bm25_topk(engine.index, req.query, max(k, engine.feature_k))
        sparse_top = softmax_normalize([s for _, s in sparse_list], k=engine.feature_k)
        f0 = float(sparse_top[0]) if sparse_top.size else 0.0
        dense_top = np.empty(0)
        if spec.uses_dense:
            dense_scores = [s for _, s in dense_topk(engine.doc_store, vec, engine.feature_k)]
            dense_top = softmax_normalize(dense_scores, k=engine.feature_k)
        choice = route(engine.router_model, feature_variants(sparse_top, dense_top, spec))
        hits = sparse_list[:k] if choice is Route.SPARSE else dense_topk(engine.doc_store, vec, k)
        return RetrieveResponse(
            system="hybrid",
            route=choice.name.lower(),
            f0=f0,
            hits=[Hit(doc_id=d, score=s) for d, s in hits],
        )

    @app.post("/route", response_model=RouteResponse)
    def route_endpoint(req: RouteRequest) -> RouteResponse:
        engine = engine_or_409()
        if engine.router_model is None:
            raise HTTPException(status_code=400, detail="no router model loaded")
        spec = engine.router_model.feature_spec
        sparse_list = bm25_topk(engine.index, req.query, engine.feature_k)
        sparse_top = softmax_normalize([s for _, s in sparse_list], k=engine.feature_k)
        f0 = float(sparse_top[0]) if sparse_top.size else 0.0
        dense_top = np.empty(0)
        if spec.uses_dense:
            if engine.doc_store is None:
                raise HTTPException(status_code=400, detail="router needs document embeddings")
            vec = query_vector(engine, req)
            dense_scores = [s for _, s in dense_topk(engine.doc_store, vec, engine.feature_k)]
            dense_top = softmax_normalize(dense_scores, k=engine.feature_k)
        features = feature_variants(sparse_top, dense_top, spec)
        choice = route(engine.router_model, features)
        probability = (
            route_probability(engine.router_model, features)
            if engine.router_model.kind == "logreg"
            else None
        )
        return RouteResponse(
            choice=choice.name.lower(),
            probability=probability,
            f0=f0,
            features=[float(f) for f in features],
        )

    return app


app = create_app()
