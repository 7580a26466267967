"""Hybrid sparse/dense evidence retrieval with a learned query router."""

__version__ = "0.1.0"

from .corpus import (
    AnalyzerConfig,
    Corpus,
    Document,
    Query,
    Vocab,
    build_vocab,
    load_dataset,
    tokenize,
)
from .dense import EmbeddingStore, ScoredList, dense_topk, load_embeddings, save_embeddings, sum_fusion
from .errors import DataError, FormatError
from .evaluation import (
    EvalReport,
    RankRecord,
    TimingReport,
    bootstrap_test,
    gold_rank,
    histogram_report,
    mrr,
    routing_report,
    time_pipeline,
)
from .pipelines import RetrievalEngine
from .probe import (
    ProbeConfig,
    ProbeExample,
    ProbeMetrics,
    ProbeModel,
    build_probe_targets,
    probe_forward,
    probe_loss,
    probe_metrics,
    train_probe,
)
from .routing import (
    FeatureSpec,
    LogRegConfig,
    Route,
    RouterModel,
    ceiling_rank,
    extract_features,
    feature_variants,
    fit_logreg,
    fit_threshold,
    make_label,
    route,
    softmax_normalize,
)
from .sparse import InvertedIndex, SparseVector, bm25_topk, build_index, load_index, save_index, tfidf_vector
from .synth import SynthWorkload, generate_workload, write_workload

__all__ = [name for name in dir() if not name.startswith("_")]
