"""Lexical probe: a frozen-input linear layer predicting vocabulary terms.

For each query the probe is trained to mark the terms of the query and of its
gold fact (the positive set P) against an equal number of sampled negatives N,
with a masked binary cross-entropy. Metrics rank the full vocabulary: MAP over
query terms, MAP over fact-only terms, and a perplexity per relevant set.

Two control tasks bound what the linear layer alone can learn: replacing each
input with a deterministic random vector, and replacing each example's targets
with those of another query.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Document, Query, Vocab, tokenize
from .errors import DataError
from .routing import sigmoid

PROB_FLOOR = 1e-7
CONTROLS = ("none", "rand-embedding", "rand-label")


@dataclass
class ProbeExample:
    """Targets for one query: P = query+fact term ordinals, N = negatives.

    `query_terms`/`fact_terms` keep the provenance split needed by the
    metrics; `x` is attached separately because the input representation
    (tf-idf or a dense embedding) is resolved per run.
    """

    qid: str
    pos: np.ndarray
    neg: np.ndarray
    query_terms: np.ndarray
    fact_terms: np.ndarray
    x: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.pos = np.asarray(self.pos, dtype=np.int64)
        self.neg = np.asarray(self.neg, dtype=np.int64)
        self.query_terms = np.asarray(self.query_terms, dtype=np.int64)
        self.fact_terms = np.asarray(self.fact_terms, dtype=np.int64)
        if len(self.pos) != len(self.neg):
            raise DataError(f"{self.qid}: |N| must equal |P|")
        if np.intersect1d(self.pos, self.neg).size:
            raise DataError(f"{self.qid}: P and N overlap")


@dataclass
class ProbeModel:
    W: np.ndarray            # (n_terms, input dim)
    bias: np.ndarray         # (n_terms,)
    input_kind: str          # "tfidf" | "dense"
    control: str = "none"


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 0.001
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float = 0.01


@dataclass
class ProbeMetrics:
    query_map: float
    query_ppl: float
    fact_map: float
    fact_ppl: float
    seed: int = -1
    epoch: int = -1


def _qid_rng(seed: int, qid: str, salt: int = 0) -> np.random.Generator:
    digest = int.from_bytes(hashlib.sha256(qid.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng([seed, digest, salt])


def build_probe_targets(
    query: Query, fact: Document, vocab: Vocab, seed: int
) -> ProbeExample | None:
    """Build P from the analyzed query and fact, N by seeded sampling.

    Returns None when no in-vocabulary term survives (skip-example signal).
    Negatives are drawn uniformly without replacement from the vocabulary
    complement of P, deterministically per (qid, seed).
    """
    cfg = vocab.analyzer
    q_terms = sorted(
        {vocab.index[t] for t in tokenize(query.text, cfg) if t in vocab.index}
    )
    f_terms = sorted(
        {vocab.index[t] for t in tokenize(fact.sentence, cfg) if t in vocab.index}
    )
    pos = np.union1d(np.asarray(q_terms, dtype=np.int64), np.asarray(f_terms, dtype=np.int64))
    if pos.size == 0:
        return None
    complement = np.setdiff1d(np.arange(len(vocab), dtype=np.int64), pos)
    if complement.size < pos.size:
        raise DataError(
            f"{query.qid}: vocabulary too small to sample {pos.size} negatives"
        )
    rng = _qid_rng(seed, query.qid)
    neg = np.sort(rng.choice(complement, size=pos.size, replace=False))
    return ProbeExample(
        qid=query.qid,
        pos=pos,
        neg=neg,
        query_terms=np.asarray(q_terms, dtype=np.int64),
        fact_terms=np.asarray(f_terms, dtype=np.int64),
    )


def probe_forward(model: ProbeModel, x: np.ndarray, term_subset: np.ndarray) -> np.ndarray:
    """Sigmoid scores for the requested term ordinals only."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.W.shape[1],):
        raise DataError(
            f"input dimension {x.shape} does not match probe dim {model.W.shape[1]}"
        )
    subset = np.asarray(term_subset, dtype=np.int64)
    return sigmoid(model.W[subset] @ x + model.bias[subset])


def probe_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Summed binary cross-entropy; probabilities clamped away from {0, 1}."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_FLOOR, 1.0 - PROB_FLOOR)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def probe_loss_grad(
    model: ProbeModel, x: np.ndarray, subset: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss plus analytic gradients for the touched rows of W and bias."""
    probs = probe_forward(model, x, subset)
    residual = probs - np.asarray(labels, dtype=np.float64)
    grad_rows = np.outer(residual, np.asarray(x, dtype=np.float64))
    return probe_loss(probs, labels), grad_rows, residual


def _example_loss(model: ProbeModel, ex: ProbeExample) -> float:
    subset = np.concatenate([ex.pos, ex.neg])
    labels = np.concatenate([np.ones(len(ex.pos)), np.zeros(len(ex.neg))])
    return probe_loss(probe_forward(model, ex.x, subset), labels)


def _apply_control(
    train: list[ProbeExample],
    dev: list[ProbeExample],
    control: str,
    seed: int,
    dim: int,
) -> tuple[list[ProbeExample], list[ProbeExample]]:
    if control == "none":
        return train, dev
    if control == "rand-embedding":
        def randomize(ex: ProbeExample) -> ProbeExample:
            x = _qid_rng(seed, ex.qid, salt=1).standard_normal(dim)
            return replace(ex, x=x)
        return [randomize(e) for e in train], [randomize(e) for e in dev]
    if control == "rand-label":
        def shuffle_targets(split: list[ProbeExample], salt: int) -> list[ProbeExample]:
            rng = np.random.default_rng([seed, salt])
            out = []
            for i, ex in enumerate(split):
                j = int(rng.integers(0, len(split) - 1)) if len(split) > 1 else 0
                if j >= i and len(split) > 1:
                    j += 1  # uniform over the *other* examples
                donor = split[j]
                out.append(
                    replace(
                        ex,
                        pos=donor.pos,
                        neg=donor.neg,
                        query_terms=donor.query_terms,
                        fact_terms=donor.fact_terms,
                    )
                )
            return out
        return shuffle_targets(train, 2), shuffle_targets(dev, 3)
    raise DataError(f"unknown control {control!r}")


def train_probe(
    train: Sequence[ProbeExample],
    dev: Sequence[ProbeExample],
    input_kind: str,
    control: str = "none",
    cfg: ProbeConfig = ProbeConfig(),
    n_terms: int | None = None,
) -> tuple[ProbeModel, ProbeMetrics]:
    """Adam (lr 0.001, batch size 1) with best-dev-loss epoch selection.

    Input representations are frozen; only W and bias move. Deterministic for
    a given config: init, negative controls and iteration order all key off
    cfg.seed.
    """
    train = [e for e in train if e is not None]
    dev = [e for e in dev if e is not None]
    if not train or not dev:
        raise DataError("probe training needs nonempty train and dev splits")
    if any(e.x is None for e in train + dev):
        raise DataError("probe examples lack input vectors")
    dim = len(train[0].x)
    if n_terms is None:
        n_terms = int(max(max(e.pos.max(), e.neg.max()) for e in train + dev)) + 1
    train, dev = _apply_control(list(train), list(dev), control, cfg.seed, dim)

    rng = np.random.default_rng(cfg.seed)
    W = rng.normal(0.0, cfg.init_scale, size=(n_terms, dim))
    bias = np.zeros(n_terms)
    m_w = np.zeros_like(W)
    v_w = np.zeros_like(W)
    m_b = np.zeros_like(bias)
    v_b = np.zeros_like(bias)
    step = 0

    best_loss = math.inf
    best_epoch = 0
    best_state = (W.copy(), bias.copy())

    model = ProbeModel(W=W, bias=bias, input_kind=input_kind, control=control)
    for epoch in range(1, cfg.epochs + 1):
        for ex in train:
            subset = np.concatenate([ex.pos, ex.neg])
            labels = np.concatenate([np.ones(len(ex.pos)), np.zeros(len(ex.neg))])
            _, grad_rows, grad_bias = probe_loss_grad(model, ex.x, subset, labels)
            g_w = np.zeros_like(W)
            g_w[subset] = grad_rows
            g_b = np.zeros_like(bias)
            g_b[subset] = grad_bias

            step += 1
            m_w = cfg.beta1 * m_w + (1.0 - cfg.beta1) * g_w
            v_w = cfg.beta2 * v_w + (1.0 - cfg.beta2) * g_w**2
            m_b = cfg.beta1 * m_b + (1.0 - cfg.beta1) * g_b
            v_b = cfg.beta2 * v_b + (1.0 - cfg.beta2) * g_b**2
            bc1 = 1.0 - cfg.beta1**step
            bc2 = 1.0 - cfg.beta2**step
            W -= cfg.lr * (m_w / bc1) / (np.sqrt(v_w / bc2) + cfg.eps)
            bias -= cfg.lr * (m_b / bc1) / (np.sqrt(v_b / bc2) + cfg.eps)

        dev_loss = math.fsum(_example_loss(model, ex) for ex in dev)
        if dev_loss < best_loss:
            best_loss = dev_loss
            best_epoch = epoch
            best_state = (W.copy(), bias.copy())

    model = ProbeModel(
        W=best_state[0], bias=best_state[1], input_kind=input_kind, control=control
    )
    metrics = probe_metrics(model, dev)
    metrics.seed = cfg.seed
    metrics.epoch = best_epoch
    return model, metrics


def average_precision(scores: np.ndarray, relevant: np.ndarray) -> float:
    """AP of the relevant set under descending scores; ties break by ordinal."""
    scores = np.asarray(scores, dtype=np.float64)
    relevant = np.asarray(relevant, dtype=np.int64)
    order = np.lexsort((np.arange(scores.size), -scores))
    rank_of = np.empty(scores.size, dtype=np.int64)
    rank_of[order] = np.arange(1, scores.size + 1)
    positions = np.sort(rank_of[relevant])
    hits = np.arange(1, positions.size + 1, dtype=np.float64)
    return float(np.mean(hits / positions))


def probe_metrics(
    model: ProbeModel, examples: Sequence[ProbeExample], vocab: Vocab | None = None
) -> ProbeMetrics:
    """Score the full vocabulary per example and aggregate MAP/PPL.

    Query metrics use the query terms as the relevant set; fact metrics use
    fact-only terms (fact minus query). Examples whose relevant set is empty
    are skipped for that metric; PPL pools log-probabilities over all
    relevant terms of all examples.
    """
    if vocab is not None and len(vocab) != model.W.shape[0]:
        raise DataError("vocabulary size does not match probe output size")
    query_aps: list[float] = []
    fact_aps: list[float] = []
    query_logp: list[np.ndarray] = []
    fact_logp: list[np.ndarray] = []
    for ex in examples:
        if ex is None:
            continue
        scores = model.W @ np.asarray(ex.x, dtype=np.float64) + model.bias
        log_probs = np.log(np.clip(sigmoid(scores), PROB_FLOOR, 1.0 - PROB_FLOOR))
        fact_only = np.setdiff1d(ex.fact_terms, ex.query_terms)
        if ex.query_terms.size:
            query_aps.append(average_precision(scores, ex.query_terms))
            query_logp.append(log_probs[ex.query_terms])
        if fact_only.size:
            fact_aps.append(average_precision(scores, fact_only))
            fact_logp.append(log_probs[fact_only])

    def pooled_ppl(chunks: list[np.ndarray]) -> float:
        if not chunks:
            return float("nan")
        return float(np.exp(-np.mean(np.concatenate(chunks))))

    return ProbeMetrics(
        query_map=float(np.mean(query_aps)) if query_aps else float("nan"),
        query_ppl=pooled_ppl(query_logp),
        fact_map=float(np.mean(fact_aps)) if fact_aps else float("nan"),
        fact_ppl=pooled_ppl(fact_logp),
    )


def run_seeds(
    train: Sequence[ProbeExample],
    dev: Sequence[ProbeExample],
    input_kind: str,
    control: str,
    seeds: Sequence[int],
    cfg: ProbeConfig = ProbeConfig(),
    n_terms: int | None = None,
) -> list[ProbeMetrics]:
    """Repeat training across seeds; pair with summarize() for mean +/- std."""
    out = []
    for seed in seeds:
        _, metrics = train_probe(
            train, dev, input_kind, control, replace_cfg(cfg, seed), n_terms
        )
        out.append(metrics)
    return out


def replace_cfg(cfg: ProbeConfig, seed: int) -> ProbeConfig:
    return ProbeConfig(
        lr=cfg.lr,
        epochs=cfg.epochs,
        seed=seed,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        init_scale=cfg.init_scale,
    )


def summarize(metrics: Sequence[ProbeMetrics]) -> dict[str, tuple[float, float]]:
    """Mean and standard deviation per metric across seeds."""
    out: dict[str, tuple[float, float]] = {}
    for name in ("query_map", "query_ppl", "fact_map", "fact_ppl"):
        values = np.array([getattr(m, name) for m in metrics], dtype=np.float64)
        out[name] = (float(np.mean(values)), float(np.std(values)))
    return out


# --- persistence -----------------------------------------------------------


def save_probe_dataset(examples: Sequence[ProbeExample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            fh.write(
                json.dumps(
                    {
                        "qid": ex.qid,
                        "pos": ex.pos.tolist(),
                        "neg": ex.neg.tolist(),
                        "query_terms": ex.query_terms.tolist(),
                        "fact_terms": ex.fact_terms.tolist(),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_probe_dataset(path: str | Path) -> list[ProbeExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out.append(
                ProbeExample(
                    qid=obj["qid"],
                    pos=np.asarray(obj["pos"], dtype=np.int64),
                    neg=np.asarray(obj["neg"], dtype=np.int64),
                    query_terms=np.asarray(obj["query_terms"], dtype=np.int64),
                    fact_terms=np.asarray(obj["fact_terms"], dtype=np.int64),
                )
            )
    return out


def save_probe_model(model: ProbeModel, path: str | Path) -> None:
    np.savez(
        path,
        W=model.W,
        bias=model.bias,
        input_kind=np.array(model.input_kind),
        control=np.array(model.control),
    )


def load_probe_model(path: str | Path) -> ProbeModel:
    data = np.load(path, allow_pickle=False)
    return ProbeModel(
        W=data["W"],
        bias=data["bias"],
        input_kind=str(data["input_kind"]),
        control=str(data["control"]),
    )
