"""Command-line entry point.

Thin client over the core package: every subcommand parses flags, calls into
the library, writes its reports under --out, and prints nothing to stdout but
the final report path. Progress goes to stderr. Exit codes: 0 success, 1
usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import probe as probe_mod
from .corpus import (
    AnalyzerConfig,
    build_vocab,
    load_corpus,
    load_queries,
    load_stopwords,
    load_vocab,
    save_vocab,
)
from .dense import load_embeddings
from .errors import DataError
from .evaluation import (
    EvalReport,
    bootstrap_test,
    histogram_csv,
    histogram_report,
    load_records,
    reciprocal_ranks,
    routing_report,
    sample_dev_split,
    save_records,
    system_mrr,
    time_pipeline,
)
from .pipelines import SYSTEM_CHOICES, RetrievalEngine
from .routing import (
    FeatureSpec,
    LogRegConfig,
    Route,
    RouterModel,
    fit_logreg,
    fit_threshold,
    make_label,
    THRESHOLD_GRID,
)
from .sparse import build_index, load_index, save_index, tfidf_vector
from .synth import generate_workload, write_workload


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # exit 1 instead of argparse's 2
        raise UsageError(f"{self.prog}: {message}")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(path: Path | str) -> None:
    print(str(path))


def _add_analyzer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--no-lowercase", action="store_true")
    parser.add_argument("--no-stem", action="store_true")
    parser.add_argument("--stopwords", help="file with one stopword per line")
    parser.add_argument("--min-count", type=int, default=1)


def _analyzer_from(args: argparse.Namespace) -> AnalyzerConfig:
    kwargs: dict = {
        "lowercase": not args.no_lowercase,
        "stem": not args.no_stem,
        "min_count": args.min_count,
    }
    if args.stopwords:
        kwargs["stopwords"] = load_stopwords(args.stopwords)
    return AnalyzerConfig(**kwargs)


def _add_embedding_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--doc-vectors")
    parser.add_argument("--doc-ids")
    parser.add_argument("--query-vectors")
    parser.add_argument("--query-ids")


def _load_engine(args: argparse.Namespace, need_router: bool = False) -> RetrievalEngine:
    index = load_index(args.index)
    doc_store = query_store = None
    if args.doc_vectors or args.doc_ids:
        if not (args.doc_vectors and args.doc_ids):
            raise UsageError("--doc-vectors and --doc-ids must be given together")
        doc_store = load_embeddings(args.doc_vectors, args.doc_ids)
    if args.query_vectors or args.query_ids:
        if not (args.query_vectors and args.query_ids):
            raise UsageError("--query-vectors and --query-ids must be given together")
        query_store = load_embeddings(args.query_vectors, args.query_ids)
    router = None
    router_path = getattr(args, "router", None)
    if router_path:
        router = RouterModel.load(router_path)
    elif need_router:
        raise UsageError("--router is required for the hybrid system")
    return RetrievalEngine(
        index=index,
        doc_store=doc_store,
        query_store=query_store,
        router_model=router,
        k=args.k,
        dense_delay_s=getattr(args, "dense_delay_ms", 0.0) / 1000.0,
    )


def _outdir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- subcommands ------------------------------------------------------------


def _cmd_index_build(args: argparse.Namespace) -> None:
    corpus = load_corpus(args.corpus)
    cfg = _analyzer_from(args)
    index = build_index(corpus, cfg, k1=args.k1, b=args.b)
    _log(f"indexed {index.n_docs} documents, {len(index.postings)} terms")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_index(index, args.out)
    _emit(args.out)


def _cmd_retrieve(args: argparse.Namespace) -> None:
    engine = _load_engine(args, need_router=args.system == "hybrid")
    queries = load_queries(args.queries)
    out = _outdir(args)
    path = out / f"results_{args.system}.jsonl"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for query in queries:
            if args.system == "hybrid":
                hits, choice, f0 = engine.run_hybrid(query)
                row = {
                    "qid": query.qid,
                    "system": "hybrid",
                    "route": choice.name.lower(),
                    "f0": f0,
                    "hits": [[doc_id, score] for doc_id, score in hits],
                }
            else:
                hits = engine.runner(args.system)(query)
                row = {
                    "qid": query.qid,
                    "system": args.system,
                    "hits": [[doc_id, score] for doc_id, score in hits],
                }
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _log(f"retrieved {len(queries)} queries with {args.system}")
    _emit(path)


def _cmd_router_fit(args: argparse.Namespace) -> None:
    engine = _load_engine(args)
    if engine.doc_store is None or engine.query_store is None:
        raise UsageError("router fitting needs document and query embeddings")
    queries = load_queries(args.queries)
    records = engine.evaluate(queries)
    labels = [make_label(r.sparse_rank, r.dense_rank) for r in records]
    out = _outdir(args)
    report: dict = {"kind": args.kind, "n_dev": len(records)}

    if args.kind == "threshold":
        f0s = [r.f0 for r in records]

        def dev_mrr(routes: list[Route]) -> float:
            ranks = [
                rec.sparse_rank if choice is Route.SPARSE else rec.dense_rank
                for rec, choice in zip(records, routes)
            ]
            return float(np.mean([0.0 if r is None else 1.0 / r for r in ranks]))

        model = fit_threshold(f0s, labels, dev_mrr)
        report["grid"] = {
            f"{theta:.1f}": dev_mrr(
                [Route.SPARSE if f0 >= theta else Route.DENSE for f0 in f0s]
            )
            for theta in THRESHOLD_GRID
        }
        report["theta"] = model.theta
    else:
        spec = FeatureSpec(sides=args.features, topk=args.topk_spec)
        features = np.stack([engine.features_for(q, spec)[0] for q in queries])
        cfg = LogRegConfig(lr=args.lr, epochs=args.epochs, l2=args.l2, seed=args.seed)
        model = fit_logreg(features, [int(l) for l in labels], cfg, spec)
        report["coefficients"] = [float(w) for w in model.weights]
        report["bias"] = float(model.bias)
        report["feature_spec"] = {"sides": spec.sides, "topk": spec.topk}

    model.analyzer_hash = engine.index.analyzer.fingerprint()
    model_path = out / "router.json"
    model.save(model_path)
    (out / "fit_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2), encoding="utf-8"
    )
    _log(f"fitted {args.kind} router on {len(records)} dev queries")
    _emit(model_path)


def _cmd_eval_mrr(args: argparse.Namespace) -> None:
    engine = _load_engine(args)
    queries = load_queries(args.queries)
    records = engine.evaluate(queries)
    out = _outdir(args)
    save_records(records, out / "records.jsonl")

    has_dense = engine.doc_store is not None and engine.query_store is not None
    if engine.router_model is not None:
        report = routing_report(records, bootstrap_iters=args.bootstrap_iters, seed=args.seed)
    else:
        mrrs = {"sparse": system_mrr(records, "sparse")}
        if has_dense:
            mrrs["dense"] = system_mrr(records, "dense")
            mrrs["ceiling"] = system_mrr(records, "ceiling")
        report = EvalReport(n=len(records), mrr=mrrs, routed_counts={}, comparisons={})
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    _log(report.to_text().rstrip())
    _emit(out / "report.csv")


def _cmd_eval_bootstrap(args: argparse.Namespace) -> None:
    records = load_records(args.records)
    rr_a = reciprocal_ranks(records, args.system_a)
    rr_b = reciprocal_ranks(records, args.system_b)
    p = bootstrap_test(rr_a, rr_b, iters=args.iters, seed=args.seed)
    out = _outdir(args)
    path = out / f"bootstrap_{args.system_a}_vs_{args.system_b}.json"
    path.write_text(
        json.dumps(
            {
                "system_a": args.system_a,
                "system_b": args.system_b,
                "iters": args.iters,
                "seed": args.seed,
                "p_value": p,
            },
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    _log(f"p({args.system_a} <= {args.system_b}) = {p:.6g}")
    _emit(path)


def _cmd_eval_routing_stats(args: argparse.Namespace) -> None:
    records = load_records(args.records)
    report = routing_report(records)
    out = _outdir(args)
    (out / "routing_stats.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "routing_stats.txt").write_text(report.to_text(), encoding="utf-8")
    _emit(out / "routing_stats.csv")


def _cmd_eval_histogram(args: argparse.Namespace) -> None:
    records = load_records(args.records)
    rows = histogram_report(records, bins=args.bins)
    out = _outdir(args)
    (out / "histogram.csv").write_text(histogram_csv(rows), encoding="utf-8")
    _emit(out / "histogram.csv")


def _cmd_eval_time(args: argparse.Namespace) -> None:
    engine = _load_engine(args, need_router=args.system == "hybrid")
    queries = load_queries(args.queries)
    engine.validate_gold(queries)
    report = time_pipeline(engine.runner(args.system), queries, args.warmup, system=args.system)
    out = _outdir(args)
    path = out / f"timing_{args.system}.csv"
    path.write_text(report.to_csv(), encoding="utf-8")
    _log(
        f"{args.system}: {len(report.durations)} timed queries, "
        f"total {report.total:.4f}s (warm-up excluded: {report.warmup_excluded})"
    )
    _emit(path)


def _cmd_probe_build(args: argparse.Namespace) -> None:
    corpus = load_corpus(args.corpus)
    queries = load_queries(args.queries)
    cfg = _analyzer_from(args)
    vocab = build_vocab(corpus, queries, cfg)
    examples = []
    skipped = 0
    for query in queries:
        fact = corpus.get(query.gold_id)
        example = probe_mod.build_probe_targets(query, fact, vocab, args.seed)
        if example is None:
            skipped += 1
            continue
        examples.append(example)
    if not examples:
        raise DataError("no probe examples survived analysis")
    out = _outdir(args)
    save_vocab(vocab, out / "vocab.json")
    probe_mod.save_probe_dataset(examples, out / "probe.jsonl")
    _log(f"built {len(examples)} probe examples ({skipped} skipped), |V|={len(vocab)}")
    _emit(out / "probe.jsonl")


def _attach_probe_inputs(examples, kind: str, args: argparse.Namespace, vocab) -> None:
    if kind == "tfidf":
        if not args.queries:
            raise UsageError("--queries is required for tf-idf probe inputs")
        by_qid = {q.qid: q for q in load_queries(args.queries)}
        for ex in examples:
            if ex.qid not in by_qid:
                raise DataError(f"probe example {ex.qid!r} missing from queries file")
            ex.x = tfidf_vector(vocab, by_qid[ex.qid].text, vocab.analyzer).to_dense(len(vocab))
    else:
        if not (args.query_vectors and args.query_ids):
            raise UsageError("--query-vectors/--query-ids are required for dense probe inputs")
        store = load_embeddings(args.query_vectors, args.query_ids)
        for ex in examples:
            ex.x = np.asarray(store.vector(ex.qid), dtype=np.float64)


def _cmd_probe_train(args: argparse.Namespace) -> None:
    vocab = load_vocab(args.vocab)
    examples = probe_mod.load_probe_dataset(args.dataset)
    _attach_probe_inputs(examples, args.input, args, vocab)
    n_dev = max(1, int(round(len(examples) * args.dev_frac)))
    if n_dev >= len(examples):
        raise DataError("dataset too small for a train/dev split")
    dev, train = sample_dev_split(examples, n_dev, args.seed)
    seeds = [int(s) for s in args.seeds.split(",")]
    out = _outdir(args)
    rows = ["input_kind,control,seed,epoch,query_map,query_ppl,fact_map,fact_ppl"]
    collected = []
    for seed in seeds:
        cfg = probe_mod.ProbeConfig(lr=args.lr, epochs=args.epochs, seed=seed)
        model, metrics = probe_mod.train_probe(
            train, dev, args.input, args.control, cfg, n_terms=len(vocab)
        )
        probe_mod.save_probe_model(model, out / f"probe_model_seed{seed}.npz")
        rows.append(
            f"{args.input},{args.control},{seed},{metrics.epoch},"
            f"{metrics.query_map:.6f},{metrics.query_ppl:.6f},"
            f"{metrics.fact_map:.6f},{metrics.fact_ppl:.6f}"
        )
        collected.append(metrics)
        _log(f"seed {seed}: query_map={metrics.query_map:.4f} (epoch {metrics.epoch})")
    summary = probe_mod.summarize(collected)
    for name, (mean, std) in summary.items():
        _log(f"{name}: {mean:.4f} +/- {std:.4f}")
    path = out / "probe_metrics.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    _emit(path)


def _cmd_probe_metrics(args: argparse.Namespace) -> None:
    vocab = load_vocab(args.vocab)
    examples = probe_mod.load_probe_dataset(args.dataset)
    model = probe_mod.load_probe_model(args.model)
    _attach_probe_inputs(examples, model.input_kind, args, vocab)
    metrics = probe_mod.probe_metrics(model, examples, vocab)
    out = _outdir(args)
    path = out / "metrics.csv"
    path.write_text(
        "input_kind,control,query_map,query_ppl,fact_map,fact_ppl\n"
        f"{model.input_kind},{model.control},{metrics.query_map:.6f},"
        f"{metrics.query_ppl:.6f},{metrics.fact_map:.6f},{metrics.fact_ppl:.6f}\n",
        encoding="utf-8",
    )
    _emit(path)


def _cmd_dataset_synth(args: argparse.Namespace) -> None:
    workload = generate_workload(
        seed=args.seed, n_docs=args.docs, n_queries=args.queries, dim=args.dim
    )
    paths = write_workload(workload, args.out)
    _log(
        f"wrote synthetic workload: {len(workload.corpus)} docs, "
        f"{len(workload.queries)} queries"
    )
    _emit(paths["manifest"])


# --- parser -----------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="hybridir", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="inverted index operations")
    isub = p.add_subparsers(dest="subcommand", required=True)
    pb = isub.add_parser("build")
    pb.add_argument("--corpus", required=True)
    pb.add_argument("--out", required=True)
    pb.add_argument("--k1", type=float, default=1.2)
    pb.add_argument("--b", type=float, default=0.75)
    _add_analyzer_flags(pb)
    pb.set_defaults(func=_cmd_index_build)

    pr = sub.add_parser("retrieve")
    pr.add_argument("--index", required=True)
    pr.add_argument("--queries", required=True)
    pr.add_argument("--system", required=True, choices=SYSTEM_CHOICES)
    pr.add_argument("--k", type=int, default=10)
    pr.add_argument("--router")
    pr.add_argument("--out", required=True)
    _add_embedding_flags(pr)
    pr.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("router", help="routing classifier operations")
    rsub = p.add_subparsers(dest="subcommand", required=True)
    rf = rsub.add_parser("fit")
    rf.add_argument("--index", required=True)
    rf.add_argument("--queries", required=True, help="dev queries")
    rf.add_argument("--kind", required=True, choices=("threshold", "logreg"))
    rf.add_argument("--features", default="sparse", choices=("sparse", "dense", "both"))
    rf.add_argument("--topk-spec", default="full", choices=("full", "1", "4", "16", "64"))
    rf.add_argument("--k", type=int, default=64)
    rf.add_argument("--lr", type=float, default=0.1)
    rf.add_argument("--epochs", type=int, default=2000)
    rf.add_argument("--l2", type=float, default=0.0)
    rf.add_argument("--seed", type=int, default=0)
    rf.add_argument("--out", required=True)
    _add_embedding_flags(rf)
    rf.set_defaults(func=_cmd_router_fit)

    p = sub.add_parser("eval", help="evaluation reports")
    esub = p.add_subparsers(dest="subcommand", required=True)

    em = esub.add_parser("mrr")
    em.add_argument("--index", required=True)
    em.add_argument("--queries", required=True)
    em.add_argument("--router")
    em.add_argument("--k", type=int, default=1000)
    em.add_argument("--bootstrap-iters", type=int, default=0)
    em.add_argument("--seed", type=int, default=0)
    em.add_argument("--out", required=True)
    _add_embedding_flags(em)
    em.set_defaults(func=_cmd_eval_mrr)

    eb = esub.add_parser("bootstrap")
    eb.add_argument("--records", required=True)
    eb.add_argument("--system-a", required=True, choices=("sparse", "dense", "routed", "ceiling"))
    eb.add_argument("--system-b", required=True, choices=("sparse", "dense", "routed", "ceiling"))
    eb.add_argument("--iters", type=int, default=10000)
    eb.add_argument("--seed", type=int, default=0)
    eb.add_argument("--out", required=True)
    eb.set_defaults(func=_cmd_eval_bootstrap)

    er = esub.add_parser("routing-stats")
    er.add_argument("--records", required=True)
    er.add_argument("--out", required=True)
    er.set_defaults(func=_cmd_eval_routing_stats)

    eh = esub.add_parser("histogram")
    eh.add_argument("--records", required=True)
    eh.add_argument("--bins", type=int, default=10)
    eh.add_argument("--out", required=True)
    eh.set_defaults(func=_cmd_eval_histogram)

    et = esub.add_parser("time")
    et.add_argument("--index", required=True)
    et.add_argument("--queries", required=True)
    et.add_argument("--system", required=True, choices=SYSTEM_CHOICES)
    et.add_argument("--warmup", type=int, default=0)
    et.add_argument("--k", type=int, default=64)
    et.add_argument("--dense-delay-ms", type=float, default=0.0)
    et.add_argument("--router")
    et.add_argument("--out", required=True)
    _add_embedding_flags(et)
    et.set_defaults(func=_cmd_eval_time)

    p = sub.add_parser("probe", help="lexical probe operations")
    psub = p.add_subparsers(dest="subcommand", required=True)

    pbld = psub.add_parser("build")
    pbld.add_argument("--corpus", required=True)
    pbld.add_argument("--queries", required=True)
    pbld.add_argument("--seed", type=int, default=0)
    pbld.add_argument("--out", required=True)
    _add_analyzer_flags(pbld)
    pbld.set_defaults(func=_cmd_probe_build)

    ptr = psub.add_parser("train")
    ptr.add_argument("--dataset", required=True)
    ptr.add_argument("--vocab", required=True)
    ptr.add_argument("--input", required=True, choices=("tfidf", "dense"))
    ptr.add_argument("--control", default="none", choices=probe_mod.CONTROLS)
    ptr.add_argument("--queries", help="queries file (tf-idf inputs)")
    ptr.add_argument("--query-vectors")
    ptr.add_argument("--query-ids")
    ptr.add_argument("--seeds", default="0", help="comma-separated seeds")
    ptr.add_argument("--seed", type=int, default=0, help="train/dev split seed")
    ptr.add_argument("--dev-frac", type=float, default=0.2)
    ptr.add_argument("--lr", type=float, default=0.001)
    ptr.add_argument("--epochs", type=int, default=50)
    ptr.add_argument("--out", required=True)
    ptr.set_defaults(func=_cmd_probe_train)

    pm = psub.add_parser("metrics")
    pm.add_argument("--model", required=True)
    pm.add_argument("--dataset", required=True)
    pm.add_argument("--vocab", required=True)
    pm.add_argument("--queries")
    pm.add_argument("--query-vectors")
    pm.add_argument("--query-ids")
    pm.add_argument("--out", required=True)
    pm.set_defaults(func=_cmd_probe_metrics)

    p = sub.add_parser("dataset", help="dataset tools")
    dsub = p.add_subparsers(dest="subcommand", required=True)
    ds = dsub.add_parser("synth")
    ds.add_argument("--out", required=True)
    ds.add_argument("--seed", type=int, default=0)
    ds.add_argument("--docs", type=int, default=200)
    ds.add_argument("--queries", type=int, default=400)
    ds.add_argument("--dim", type=int, default=None)
    ds.set_defaults(func=_cmd_dataset_synth)

    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    try:
        args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
