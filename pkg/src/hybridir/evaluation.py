"""Gold ranks, MRR, bootstrap significance, routing statistics, and timing.

Reports are plain dataclasses with CSV/text emitters so the CLI and the
service can share them. Timing uses the process monotonic clock; warm-up
queries are executed but excluded from totals.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .dense import ScoredList
from .errors import DataError
from .routing import Route, ceiling_rank, make_label

SYSTEMS = ("sparse", "dense", "routed", "ceiling")


@dataclass
class RankRecord:
    """Per-query gold ranks for both retrievers plus the routing outcome."""

    qid: str
    sparse_rank: int | None
    dense_rank: int | None
    routed: Route | None = None
    routed_rank: int | None = None
    f0: float | None = None

    def rank_for(self, system: str) -> int | None:
        if system == "sparse":
            return self.sparse_rank
        if system == "dense":
            return self.dense_rank
        if system == "routed":
            return self.routed_rank
        if system == "ceiling":
            return ceiling_rank(self.sparse_rank, self.dense_rank)
        raise DataError(f"unknown system {system!r}")

    def to_json(self) -> dict:
        return {
            "qid": self.qid,
            "sparse_rank": self.sparse_rank,
            "dense_rank": self.dense_rank,
            "routed": None if self.routed is None else self.routed.name.lower(),
            "routed_rank": self.routed_rank,
            "f0": self.f0,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RankRecord":
        routed = obj.get("routed")
        return cls(
            qid=obj["qid"],
            sparse_rank=obj.get("sparse_rank"),
            dense_rank=obj.get("dense_rank"),
            routed=None if routed is None else Route[routed.upper()],
            routed_rank=obj.get("routed_rank"),
            f0=obj.get("f0"),
        )


@dataclass
class EvalReport:
    n: int
    mrr: dict[str, float]
    routed_counts: dict[str, int]
    comparisons: dict[str, dict[str, int]]
    p_values: dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"queries: {self.n}"]
        for system in sorted(self.mrr):
            lines.append(f"mrr[{system}]: {self.mrr[system]:.6f}")
        for backend in ("sparse", "dense"):
            lines.append(f"routed to {backend}: {self.routed_counts.get(backend, 0)}")
        for baseline, counts in sorted(self.comparisons.items()):
            lines.append(
                f"vs {baseline}: improved={counts['improved']} "
                f"worse={counts['worse']} unchanged={counts['unchanged']}"
            )
        for name, p in sorted(self.p_values.items()):
            lines.append(f"p[{name}]: {p:.6g}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["metric,value"]
        rows.append(f"n,{self.n}")
        for system in sorted(self.mrr):
            rows.append(f"mrr_{system},{self.mrr[system]:.10f}")
        for backend in ("sparse", "dense"):
            rows.append(f"routed_{backend},{self.routed_counts.get(backend, 0)}")
        for baseline, counts in sorted(self.comparisons.items()):
            for key in ("improved", "worse", "unchanged"):
                rows.append(f"{key}_vs_{baseline},{counts[key]}")
        for name, p in sorted(self.p_values.items()):
            rows.append(f"p_{name},{p:.10g}")
        return "\n".join(rows) + "\n"


@dataclass
class TimingReport:
    system: str
    durations: list[float]
    total: float
    warmup_excluded: int
    clock_resolution: float

    def to_csv(self) -> str:
        rows = [
            f"# system={self.system} warmup_excluded={self.warmup_excluded} "
            f"clock_resolution={self.clock_resolution:.3g}",
            "query_index,seconds",
        ]
        rows.extend(f"{i},{d:.9f}" for i, d in enumerate(self.durations))
        rows.append(f"total,{self.total:.9f}")
        return "\n".join(rows) + "\n"


def gold_rank(scored: ScoredList, gold_id: str) -> int | None:
    """1-based position of the gold document, or None when absent."""
    for position, (doc_id, _) in enumerate(scored, start=1):
        if doc_id == gold_id:
            return position
    return None


def reciprocal(rank: int | None) -> float:
    return 0.0 if rank is None else 1.0 / rank


def mrr(ranks: Sequence[int | None]) -> float:
    """Mean reciprocal rank; an absent rank contributes zero."""
    ranks = list(ranks)
    if not ranks:
        raise DataError("mrr needs at least one rank")
    return math.fsum(reciprocal(r) for r in ranks) / len(ranks)


def system_ranks(records: Sequence[RankRecord], system: str) -> list[int | None]:
    return [r.rank_for(system) for r in records]


def system_mrr(records: Sequence[RankRecord], system: str) -> float:
    return mrr(system_ranks(records, system))


def reciprocal_ranks(records: Sequence[RankRecord], system: str) -> np.ndarray:
    return np.array([reciprocal(r.rank_for(system)) for r in records], dtype=np.float64)


def bootstrap_test(
    rr_a: Sequence[float],
    rr_b: Sequence[float],
    iters: int = 10000,
    seed: int = 0,
) -> float:
    """One-sided paired bootstrap: p = fraction of resamples where A <= B.

    Queries are resampled with replacement; pairing is preserved by using the
    same index draw for both systems. Deterministic for a given seed.
    """
    a = np.asarray(rr_a, dtype=np.float64)
    b = np.asarray(rr_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("paired bootstrap needs equal-length rank vectors")
    if a.size == 0:
        raise DataError("paired bootstrap needs at least one query")
    diffs = a - b
    rng = np.random.default_rng(seed)
    n = diffs.size
    hits = 0
    remaining = iters
    # chunked so 10k iterations on large query sets stay within memory
    chunk = max(1, min(iters, 2_000_000 // max(n, 1)))
    while remaining > 0:
        take = min(chunk, remaining)
        idx = rng.integers(0, n, size=(take, n))
        means = diffs[idx].mean(axis=1)
        hits += int(np.count_nonzero(means <= 0.0))
        remaining -= take
    return hits / iters


def routing_report(
    records: Sequence[RankRecord],
    bootstrap_iters: int = 0,
    seed: int = 0,
) -> EvalReport:
    """Routing counts, per-baseline improved/worse tallies, and MRRs.

    An absent rank counts as the worst possible outcome in comparisons.
    When `bootstrap_iters` > 0, p-values for routed-vs-sparse and
    routed-vs-dense are included.
    """
    records = list(records)
    if not records:
        raise DataError("routing report needs at least one record")
    if any(r.routed is None for r in records):
        raise DataError("routing report needs routed records")

    counts = {
        "sparse": sum(1 for r in records if r.routed is Route.SPARSE),
        "dense": sum(1 for r in records if r.routed is Route.DENSE),
    }
    comparisons: dict[str, dict[str, int]] = {}
    for baseline in ("sparse", "dense"):
        improved = worse = 0
        for rec in records:
            ours = math.inf if rec.routed_rank is None else rec.routed_rank
            theirs = math.inf if rec.rank_for(baseline) is None else rec.rank_for(baseline)
            if ours < theirs:
                improved += 1
            elif ours > theirs:
                worse += 1
        comparisons[baseline] = {
            "improved": improved,
            "worse": worse,
            "unchanged": len(records) - improved - worse,
        }
    report = EvalReport(
        n=len(records),
        mrr={system: system_mrr(records, system) for system in SYSTEMS},
        routed_counts=counts,
        comparisons=comparisons,
    )
    if bootstrap_iters > 0:
        routed = reciprocal_ranks(records, "routed")
        for baseline in ("sparse", "dense"):
            report.p_values[f"routed_vs_{baseline}"] = bootstrap_test(
                routed, reciprocal_ranks(records, baseline), bootstrap_iters, seed
            )
    return report


def histogram_report(
    records: Sequence[RankRecord],
    f0s: Sequence[float] | None = None,
    bins: int = 10,
) -> list[tuple[float, float, int, int]]:
    """Counts of sparse-no-worse vs dense-better queries per f[0] bin.

    Bins partition [0, 1]; the last bin is right-inclusive. `f0s` defaults to
    the values stored on the records.
    """
    records = list(records)
    if f0s is None:
        f0s = [r.f0 for r in records]
        if any(v is None for v in f0s):
            raise DataError("records lack f0 values; pass f0s explicitly")
    f0s = list(f0s)
    if len(f0s) != len(records):
        raise DataError("records/f0s length mismatch")
    sparse_counts = [0] * bins
    dense_counts = [0] * bins
    for rec, f0 in zip(records, f0s):
        if not 0.0 <= f0 <= 1.0:
            raise DataError(f"f0 {f0} outside [0, 1]")
        slot = min(int(f0 * bins), bins - 1)
        if make_label(rec.sparse_rank, rec.dense_rank) is Route.SPARSE:
            sparse_counts[slot] += 1
        else:
            dense_counts[slot] += 1
    return [
        (i / bins, (i + 1) / bins, sparse_counts[i], dense_counts[i])
        for i in range(bins)
    ]


def histogram_csv(rows: list[tuple[float, float, int, int]]) -> str:
    out = ["bin_lo,bin_hi,sparse_no_worse,dense_better"]
    out.extend(f"{lo:.2f},{hi:.2f},{s},{d}" for lo, hi, s, d in rows)
    return "\n".join(out) + "\n"


def time_pipeline(
    run_query: Callable[[object], object],
    queries: Sequence[object],
    warmup: int,
    system: str = "",
) -> TimingReport:
    """Time each query end-to-end after running the first `warmup` untimed.

    Strictly single-threaded so totals are comparable across systems.
    """
    if warmup < 0:
        raise DataError("warmup must be >= 0")
    queries = list(queries)
    for query in queries[:warmup]:
        run_query(query)
    durations: list[float] = []
    for query in queries[warmup:]:
        start = time.perf_counter()
        run_query(query)
        durations.append(time.perf_counter() - start)
    return TimingReport(
        system=system,
        durations=durations,
        total=math.fsum(durations),
        warmup_excluded=min(warmup, len(queries)),
        clock_resolution=time.get_clock_info("perf_counter").resolution,
    )


def sample_dev_split(items: Sequence, n: int, seed: int) -> tuple[list, list]:
    """Seeded dev sample of size n; the remainder keeps its original order."""
    items = list(items)
    if not 0 <= n <= len(items):
        raise DataError(f"cannot sample {n} items from {len(items)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(items))
    dev_idx = perm[:n]
    dev_set = set(int(i) for i in dev_idx)
    dev = [items[int(i)] for i in dev_idx]
    rest = [item for i, item in enumerate(items) if i not in dev_set]
    return dev, rest


def kfold_splits(
    items: Sequence, folds: int = 5, dev_size: int | None = None, seed: int = 0
) -> list[tuple[list, list]]:
    """Cross-validation splits: per fold, a seeded dev sample drawn from the
    fold and the remaining folds concatenated as test."""
    items = list(items)
    if folds < 2 or folds > len(items):
        raise DataError("folds must lie in [2, len(items)]")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(items))
    fold_indices = np.array_split(perm, folds)
    splits: list[tuple[list, list]] = []
    for i, fold in enumerate(fold_indices):
        size = len(fold) if dev_size is None else min(dev_size, len(fold))
        dev_pick = rng.choice(fold, size=size, replace=False)
        dev = [items[int(j)] for j in dev_pick]
        test = [
            items[int(j)]
            for other in fold_indices[:i] + fold_indices[i + 1 :]
            for j in other
        ]
        splits.append((dev, test))
    return splits


def save_records(records: Iterable[RankRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


def load_records(path: str | Path) -> list[RankRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(RankRecord.from_json(json.loads(line)))
    return records
