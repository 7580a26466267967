"""Per-query routing between the sparse and dense retrievers.

The router looks only at softmax-normalized top retrieval scores. From the
normalized scores S (descending) it builds the feature ladder
f[i] = mean(S[0:2^i]) for i = 0..6, then decides with either a single
threshold on f[0] or a from-scratch logistic regression over the ladder.
Label convention: 1 = choose the dense retriever, 0 = choose sparse.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError

LADDER_SIZE = 7          # features f[0]..f[6]
DEFAULT_TOP_K = 64       # normalization depth: top 2^6 scores
TOPK_CHOICES = (1, 4, 16, 64)
THRESHOLD_GRID = tuple(i / 10 for i in range(11))


class Route(IntEnum):
    SPARSE = 0
    DENSE = 1


def softmax_normalize(scores: Sequence[float], k: int = DEFAULT_TOP_K) -> np.ndarray:
    """Stable softmax over the top min(k, len) scores (input descending)."""
    arr = np.asarray(list(scores), dtype=np.float64)
    if arr.size == 0:
        return arr
    if not np.all(np.isfinite(arr)):
        raise DataError("cannot normalize non-finite scores")
    arr = arr[: min(k, arr.size)]
    shifted = np.exp(arr - arr.max())
    return shifted / shifted.sum()


def extract_features(probs: np.ndarray) -> np.ndarray:
    """Feature ladder over the normalized scores, zero-padded to 64 entries."""
    probs = np.asarray(probs, dtype=np.float64)
    out = np.empty(LADDER_SIZE, dtype=np.float64)
    for i in range(LADDER_SIZE):
        width = 2 ** i
        out[i] = probs[:width].sum() / width
    return out


def make_label(sparse_rank: int | None, dense_rank: int | None) -> Route:
    """Dense only when its gold rank is strictly better; ties go to sparse."""
    s = float("inf") if sparse_rank is None else sparse_rank
    d = float("inf") if dense_rank is None else dense_rank
    return Route.DENSE if d < s else Route.SPARSE


def ceiling_rank(sparse_rank: int | None, dense_rank: int | None) -> int | None:
    """Rank of the oracle that always picks the better retriever."""
    if sparse_rank is None:
        return dense_rank
    if dense_rank is None:
        return sparse_rank
    return min(sparse_rank, dense_rank)


@dataclass(frozen=True)
class FeatureSpec:
    """Which retrievers feed the router and at what depth.

    sides: "sparse", "dense", or "both" (sparse ladder first).
    topk: "full" for the seven-feature ladder, or one of 1/4/16/64 for a
    single mean-of-top-k feature per side.
    """

    sides: str = "sparse"
    topk: int | str = "full"

    def __post_init__(self) -> None:
        if self.sides not in ("sparse", "dense", "both"):
            raise DataError(f"unknown feature sides {self.sides!r}")
        if self.topk != "full":
            if int(self.topk) not in TOPK_CHOICES:
                raise DataError(f"topk must be 'full' or one of {TOPK_CHOICES}")
            object.__setattr__(self, "topk", int(self.topk))

    @property
    def n_features(self) -> int:
        per_side = LADDER_SIZE if self.topk == "full" else 1
        return per_side * (2 if self.sides == "both" else 1)

    @property
    def uses_dense(self) -> bool:
        return self.sides in ("dense", "both")


def feature_variants(
    sparse_top: np.ndarray, dense_top: np.ndarray, spec: FeatureSpec
) -> np.ndarray:
    """Assemble the router input for one query under `spec`."""

    def one_side(probs: np.ndarray) -> np.ndarray:
        if spec.topk == "full":
            return extract_features(probs)
        width = int(spec.topk)
        probs = np.asarray(probs, dtype=np.float64)
        return np.array([probs[:width].sum() / width])

    parts = []
    if spec.sides in ("sparse", "both"):
        parts.append(one_side(sparse_top))
    if spec.sides in ("dense", "both"):
        parts.append(one_side(dense_top))
    return np.concatenate(parts)


@dataclass
class RouterModel:
    """Either a threshold on f[0] or logistic-regression weights."""

    kind: str                         # "threshold" | "logreg"
    feature_spec: FeatureSpec
    theta: float | None = None
    weights: np.ndarray | None = None
    bias: float | None = None
    analyzer_hash: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "threshold":
            if self.theta is None or self.weights is not None:
                raise DataError("threshold model requires theta and no weights")
            if not 0.0 <= self.theta <= 1.0:
                raise DataError("theta must lie in [0, 1]")
        elif self.kind == "logreg":
            if self.weights is None or self.bias is None or self.theta is not None:
                raise DataError("logreg model requires weights and bias only")
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != (self.feature_spec.n_features,):
                raise DataError(
                    f"expected {self.feature_spec.n_features} weights, "
                    f"got {self.weights.shape}"
                )
        else:
            raise DataError(f"unknown router kind {self.kind!r}")

    def save(self, path: str | Path) -> None:
        obj: dict = {
            "kind": self.kind,
            "feature_spec": {"sides": self.feature_spec.sides, "topk": self.feature_spec.topk},
            "analyzer_hash": self.analyzer_hash,
        }
        if self.kind == "threshold":
            obj["theta"] = self.theta
        else:
            obj["weights"] = [float(w) for w in self.weights]
            obj["bias"] = float(self.bias)
        Path(path).write_text(json.dumps(obj, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RouterModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        spec = FeatureSpec(sides=obj["feature_spec"]["sides"], topk=obj["feature_spec"]["topk"])
        if obj["kind"] == "threshold":
            return cls(
                kind="threshold",
                feature_spec=spec,
                theta=float(obj["theta"]),
                analyzer_hash=obj.get("analyzer_hash"),
            )
        return cls(
            kind="logreg",
            feature_spec=spec,
            weights=np.asarray(obj["weights"], dtype=np.float64),
            bias=float(obj["bias"]),
            analyzer_hash=obj.get("analyzer_hash"),
        )


def sigmoid(z: np.ndarray | float) -> np.ndarray | float:
    arr = np.atleast_1d(np.asarray(z, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ez = np.exp(arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out[0]) if np.ndim(z) == 0 else out


@dataclass(frozen=True)
class LogRegConfig:
    """Full-batch gradient-descent settings; zero init keeps runs reproducible."""

    lr: float = 0.1
    epochs: int = 2000
    l2: float = 0.0
    seed: int = 0


def logreg_loss_grad(
    w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float = 0.0
) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy of sigmoid(Xw + b) and its gradient."""
    z = X @ w + b
    # log(1 + e^z) - y*z is the numerically safe form of the BCE
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w, w))
    r = sigmoid(z) - y
    grad_w = X.T @ r / len(y) + l2 * w
    grad_b = float(np.mean(r))
    return loss, grad_w, grad_b


def fit_logreg(
    features: np.ndarray,
    labels: Sequence[int],
    cfg: LogRegConfig = LogRegConfig(),
    feature_spec: FeatureSpec = FeatureSpec(sides="sparse", topk="full"),
) -> RouterModel:
    """Train the routing classifier by deterministic full-batch descent."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("features must be a 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise DataError("features contain non-finite values")
    y = np.asarray([int(v) for v in labels], dtype=np.float64)
    if len(y) != len(X):
        raise DataError("features/labels length mismatch")
    if X.shape[1] != feature_spec.n_features:
        raise DataError(
            f"feature matrix has {X.shape[1]} columns, spec expects "
            f"{feature_spec.n_features}"
        )
    w = np.zeros(X.shape[1], dtype=np.float64)
    b = 0.0
    for _ in range(cfg.epochs):
        _, gw, gb = logreg_loss_grad(w, b, X, y, cfg.l2)
        w -= cfg.lr * gw
        b -= cfg.lr * gb
    return RouterModel(kind="logreg", feature_spec=feature_spec, weights=w, bias=b)


def fit_threshold(
    f0s: Sequence[float],
    labels: Sequence[Route],
    dev_mrr_fn: Callable[[list[Route]], float],
) -> RouterModel:
    """Grid-search theta over {0.0, 0.1, ..., 1.0} maximizing dev MRR.

    Routes sparse when f[0] >= theta. Ties prefer the smallest theta, which
    sends more queries to the cheaper retriever. `labels` are accepted for
    interface parity with fit_logreg and length validation only; selection is
    driven by the dev MRR of the routed system.
    """
    f0s = list(f0s)
    if not f0s:
        raise DataError("threshold fitting needs at least one dev query")
    if len(list(labels)) != len(f0s):
        raise DataError("f0s/labels length mismatch")
    best_theta = None
    best_score = -1.0
    for theta in THRESHOLD_GRID:
        routes = [Route.SPARSE if f0 >= theta else Route.DENSE for f0 in f0s]
        score = dev_mrr_fn(routes)
        if score > best_score:
            best_theta, best_score = theta, score
    return RouterModel(
        kind="threshold", feature_spec=FeatureSpec(sides="sparse", topk=1), theta=best_theta
    )


def route_probability(model: RouterModel, features: np.ndarray) -> float:
    """P(dense) under a logreg model."""
    if model.kind != "logreg":
        raise DataError("probabilities are defined for logreg models only")
    f = np.atleast_1d(np.asarray(features, dtype=np.float64))
    return float(sigmoid(np.dot(model.weights, f) + model.bias))


def route(model: RouterModel, features: np.ndarray) -> Route:
    """Decide the retriever for one query.

    Threshold: sparse iff f[0] >= theta. Logreg: dense iff the predicted
    probability is >= 0.5 (label 1 means dense).
    """
    f = np.atleast_1d(np.asarray(features, dtype=np.float64))
    if model.kind == "threshold":
        return Route.SPARSE if f[0] >= model.theta else Route.DENSE
    return Route.DENSE if route_probability(model, f) >= 0.5 else Route.SPARSE
