"""Lexical probe: targets, forward/loss, training, controls, and metrics."""

import math

import numpy as np
import pytest

from hybridir.corpus import AnalyzerConfig, Corpus, Document, Query, build_vocab
from hybridir.errors import DataError
from hybridir.probe import (
    ProbeConfig,
    ProbeExample,
    ProbeModel,
    average_precision,
    build_probe_targets,
    load_probe_dataset,
    load_probe_model,
    probe_forward,
    probe_loss,
    probe_loss_grad,
    probe_metrics,
    run_seeds,
    save_probe_dataset,
    save_probe_model,
    summarize,
    train_probe,
)
from conftest import make_corpus, make_identity_task
from oracles import (
    average_precision_bruteforce,
    finite_difference_gradient,
    random_ranking_ap_baseline,
)


def _science_vocab():
    corpus = Corpus(
        [
            Document(id="fact", sentence="Tadpole changes into a frog"),
            Document(id="pad1", sentence="water animals start small"),
            Document(id="pad2", sentence="rocks and rivers remain"),
            Document(id="pad3", sentence="frogs jump over rocks quickly"),
            Document(id="pad4", sentence="small rivers carry water far"),
            Document(id="pad5", sentence="animals change their lives often"),
        ]
    )
    return corpus, build_vocab(corpus, [], AnalyzerConfig())


class TestBuildTargets:
    def test_science_example_targets(self):
        corpus, vocab = _science_vocab()
        query = Query(
            qid="q1",
            text="Tadpoles start their lives as Water animals",
            gold_id="fact",
        )
        example = build_probe_targets(query, corpus.get("fact"), vocab, seed=0)
        positives = {vocab.terms[o] for o in example.pos}
        # analyzer output: stopwords removed, s-stemmed, deduplicated
        assert positives == {"tadpole", "start", "live", "water", "animal", "change", "frog"}
        query_terms = {vocab.terms[o] for o in example.query_terms}
        assert query_terms == {"tadpole", "start", "live", "water", "animal"}
        assert len(example.neg) == len(example.pos)
        assert not set(example.neg.tolist()) & set(example.pos.tolist())

    def test_all_stopwords_is_skip_signal(self):
        corpus, vocab = _science_vocab()
        query = Query(qid="q2", text="is a the of", gold_id="fact")
        fact = Document(id="fact2", sentence="the of is a")
        assert build_probe_targets(query, fact, vocab, seed=0) is None

    def test_property_sweep(self):
        corpus, vocab = _science_vocab()
        rng = np.random.default_rng(0)
        words = list(vocab.terms)
        for i in range(1000):
            text = " ".join(words[int(j)] for j in rng.integers(0, len(words), size=3))
            query = Query(qid=f"q{i}", text=text, gold_id="fact")
            fact = corpus.documents[int(rng.integers(0, len(corpus.documents)))]
            example = build_probe_targets(query, fact, vocab, seed=7)
            assert example is not None
            assert len(example.neg) == len(example.pos)
            assert not set(example.neg.tolist()) & set(example.pos.tolist())
            assert example.pos.max() < len(vocab)

    def test_deterministic_per_qid_and_seed(self):
        corpus, vocab = _science_vocab()
        query = Query(qid="qx", text="water animals", gold_id="fact")
        fact = corpus.get("fact")
        a = build_probe_targets(query, fact, vocab, seed=3)
        b = build_probe_targets(query, fact, vocab, seed=3)
        c = build_probe_targets(query, fact, vocab, seed=4)
        np.testing.assert_array_equal(a.neg, b.neg)
        assert not np.array_equal(a.neg, c.neg) or len(a.neg) <= 1

    def test_vocab_too_small_for_negatives(self):
        cfg = AnalyzerConfig(stem=False, stopwords=frozenset())
        corpus = make_corpus(["aa bb"])
        vocab = build_vocab(corpus, [], cfg)
        query = Query(qid="q", text="aa bb", gold_id="d0")
        with pytest.raises(DataError, match="too small"):
            build_probe_targets(query, corpus.get("d0"), vocab, seed=0)


class TestForwardAndLoss:
    def test_zero_model_predicts_half(self):
        model = ProbeModel(W=np.zeros((5, 3)), bias=np.zeros(5), input_kind="dense")
        probs = probe_forward(model, np.ones(3), np.array([0, 2, 4]))
        np.testing.assert_allclose(probs, 0.5)

    def test_analytic_sigmoid_point(self):
        W = np.zeros((2, 1))
        W[1, 0] = math.log(3.0)
        model = ProbeModel(W=W, bias=np.zeros(2), input_kind="dense")
        probs = probe_forward(model, np.array([1.0]), np.array([1]))
        assert probs[0] == pytest.approx(0.75)

    def test_matches_full_matrix_oracle(self):
        rng = np.random.default_rng(1)
        W = rng.normal(size=(20, 6))
        bias = rng.normal(size=20)
        model = ProbeModel(W=W, bias=bias, input_kind="dense")
        x = rng.normal(size=6)
        subset = np.array([3, 7, 11, 19])
        full = 1.0 / (1.0 + np.exp(-(W @ x + bias)))
        np.testing.assert_allclose(probe_forward(model, x, subset), full[subset], atol=1e-12)

    def test_dimension_mismatch_rejected(self):
        model = ProbeModel(W=np.zeros((5, 3)), bias=np.zeros(5), input_kind="dense")
        with pytest.raises(DataError):
            probe_forward(model, np.ones(4), np.array([0]))

    def test_symmetric_bce_value(self):
        loss = probe_loss(np.full(4, 0.5), np.array([1.0, 1.0, 0.0, 0.0]))
        assert loss == pytest.approx(4 * math.log(2.0))

    def test_clamp_floor_on_perfect_predictions(self):
        loss = probe_loss(np.array([1.0, 1.0, 0.0, 0.0]), np.array([1.0, 1.0, 0.0, 0.0]))
        assert loss == pytest.approx(4 * -math.log(1.0 - 1e-7), rel=1e-3)
        assert loss > 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n_terms, dim = int(rng.integers(3, 10)), int(rng.integers(2, 6))
            W = rng.normal(scale=0.3, size=(n_terms, dim))
            bias = rng.normal(scale=0.3, size=n_terms)
            x = rng.normal(size=dim)
            size = int(rng.integers(1, n_terms + 1))
            subset = np.sort(rng.choice(n_terms, size=size, replace=False))
            labels = rng.integers(0, 2, size=size).astype(float)

            model = ProbeModel(W=W, bias=bias, input_kind="dense")
            _, grad_rows, grad_bias = probe_loss_grad(model, x, subset, labels)

            def loss_of_rows(rows):
                trial = ProbeModel(W=W.copy(), bias=bias, input_kind="dense")
                trial.W[subset] = rows
                return probe_loss(probe_forward(trial, x, subset), labels)

            fd_rows = finite_difference_gradient(loss_of_rows, W[subset].copy())
            np.testing.assert_allclose(grad_rows, fd_rows, rtol=1e-5, atol=1e-7)

            def loss_of_bias(bvals):
                trial = ProbeModel(W=W, bias=bias.copy(), input_kind="dense")
                trial.bias[subset] = bvals
                return probe_loss(probe_forward(trial, x, subset), labels)

            fd_bias = finite_difference_gradient(loss_of_bias, bias[subset].copy())
            np.testing.assert_allclose(grad_bias, fd_bias, rtol=1e-5, atol=1e-7)


class TestTraining:
    def test_identity_task_reaches_perfect_map(self):
        train, dev, vocab_size = make_identity_task(seed=0)
        _, metrics = train_probe(
            train, dev, "dense", "none", ProbeConfig(epochs=50, seed=0), n_terms=vocab_size
        )
        assert metrics.query_map > 0.99
        assert metrics.epoch <= 50

    def test_rand_embedding_control_stays_near_chance(self):
        train, dev, vocab_size = make_identity_task(seed=1)
        _, metrics = train_probe(
            train, dev, "dense", "rand-embedding", ProbeConfig(epochs=30, seed=0),
            n_terms=vocab_size,
        )
        chance = random_ranking_ap_baseline(
            n_items=vocab_size, n_relevant=4, trials=4000, seed=9
        )
        assert metrics.query_map <= 2.0 * chance

    def test_rand_label_control_below_real_probe(self):
        train, dev, vocab_size = make_identity_task(seed=2)
        _, real = train_probe(
            train, dev, "dense", "none", ProbeConfig(epochs=30, seed=0), n_terms=vocab_size
        )
        _, shuffled = train_probe(
            train, dev, "dense", "rand-label", ProbeConfig(epochs=30, seed=0),
            n_terms=vocab_size,
        )
        assert shuffled.query_map < real.query_map

    def test_five_seed_protocol_reports_mean_and_std(self):
        train, dev, vocab_size = make_identity_task(seed=3, n_train=60, n_dev=20)
        metrics = run_seeds(
            train, dev, "dense", "none", seeds=range(5),
            cfg=ProbeConfig(epochs=15), n_terms=vocab_size,
        )
        assert len(metrics) == 5
        assert [m.seed for m in metrics] == list(range(5))
        stats = summarize(metrics)
        mean, std = stats["query_map"]
        assert 0.0 <= mean <= 1.0 and std >= 0.0

    def test_bitwise_determinism_for_fixed_seed(self):
        train, dev, vocab_size = make_identity_task(seed=4, n_train=40, n_dev=12)
        cfg = ProbeConfig(epochs=8, seed=5)
        model_a, metrics_a = train_probe(train, dev, "dense", "none", cfg, n_terms=vocab_size)
        model_b, metrics_b = train_probe(train, dev, "dense", "none", cfg, n_terms=vocab_size)
        np.testing.assert_array_equal(model_a.W, model_b.W)
        np.testing.assert_array_equal(model_a.bias, model_b.bias)
        # fact metrics are nan by construction here, so compare field-wise
        assert metrics_a.query_map == metrics_b.query_map
        assert metrics_a.query_ppl == metrics_b.query_ppl
        assert metrics_a.epoch == metrics_b.epoch

    def test_dev_selection_never_worse_than_final_epoch(self):
        train, dev, vocab_size = make_identity_task(seed=6, n_train=40, n_dev=12)
        cfg = ProbeConfig(epochs=12, seed=1)
        model, metrics = train_probe(train, dev, "dense", "none", cfg, n_terms=vocab_size)
        assert 1 <= metrics.epoch <= 12

    def test_empty_split_rejected(self):
        train, dev, vocab_size = make_identity_task(seed=7, n_train=4, n_dev=2)
        with pytest.raises(DataError):
            train_probe([], dev, "dense", "none", n_terms=vocab_size)
        with pytest.raises(DataError):
            train_probe(train, [], "dense", "none", n_terms=vocab_size)


class TestMetrics:
    def _model_from_scores(self, scores):
        # one input dimension; x = [1.0] makes W column the score vector
        W = np.asarray(scores, dtype=float)[:, None]
        return ProbeModel(W=W, bias=np.zeros(len(scores)), input_kind="dense")

    def _example(self, n, query_terms, fact_terms):
        pos = np.union1d(query_terms, fact_terms)
        neg = np.setdiff1d(np.arange(n), pos)[: len(pos)]
        return ProbeExample(
            qid="m1",
            pos=pos,
            neg=neg,
            query_terms=np.asarray(query_terms),
            fact_terms=np.asarray(fact_terms),
            x=np.array([1.0]),
        )

    def test_perfect_ranking_gives_map_one(self):
        model = self._model_from_scores([9.0, 8.0, -1.0, -2.0, -3.0, -4.0])
        ex = self._example(6, [0, 1], [0, 1])
        metrics = probe_metrics(model, [ex])
        assert metrics.query_map == 1.0

    def test_certain_predictions_give_ppl_one(self):
        model = self._model_from_scores([50.0, 50.0, -50.0, -50.0])
        ex = self._example(4, [0, 1], [0, 1])
        metrics = probe_metrics(model, [ex])
        assert metrics.query_ppl == pytest.approx(1.0, rel=1e-4)

    def test_half_probability_gives_ppl_two(self):
        model = self._model_from_scores([0.0, 0.0, -9.0, -9.0])
        ex = self._example(4, [0, 1], [0, 1])
        metrics = probe_metrics(model, [ex])
        assert metrics.query_ppl == pytest.approx(2.0, rel=1e-12)

    def test_fact_metric_uses_fact_only_terms(self):
        # ranking is over the whole vocabulary: fact-only term 2 sits at
        # overall rank 3 behind the two query terms, so fact AP = 1/3
        model = self._model_from_scores([9.0, 8.0, 7.0, -1.0, -2.0, -3.0, -4.0, -5.0])
        ex = self._example(8, [0, 1], [0, 1, 2])
        metrics = probe_metrics(model, [ex])
        assert metrics.fact_map == pytest.approx(1 / 3)
        assert metrics.query_map == 1.0

    def test_empty_fact_only_set_is_skipped(self):
        model = self._model_from_scores([1.0, 0.5, 0.0, -0.5])
        ex = self._example(4, [0, 1], [0, 1])
        metrics = probe_metrics(model, [ex])
        assert math.isnan(metrics.fact_map)

    def test_ppl_at_least_one(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            scores = rng.normal(size=10)
            model = self._model_from_scores(scores)
            ex = self._example(10, [0, 3], [0, 3, 5])
            metrics = probe_metrics(model, [ex])
            assert metrics.query_ppl >= 1.0
            assert metrics.fact_ppl >= 1.0

    def test_map_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(9)
        scores = rng.normal(size=12)
        a = probe_metrics(self._model_from_scores(scores), [self._example(12, [1, 4], [1, 4])])
        b = probe_metrics(
            self._model_from_scores(3.0 * scores + 7.0), [self._example(12, [1, 4], [1, 4])]
        )
        assert a.query_map == b.query_map

    def test_average_precision_matches_bruteforce(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            n = int(rng.integers(3, 30))
            scores = rng.normal(size=n)
            n_rel = int(rng.integers(1, n + 1))
            relevant = np.sort(rng.choice(n, size=n_rel, replace=False))
            got = average_precision(scores, relevant)
            expected = average_precision_bruteforce(scores, set(relevant.tolist()))
            assert got == pytest.approx(expected, abs=1e-12)


class TestProbePersistence:
    def test_dataset_roundtrip(self, tmp_path):
        corpus, vocab = _science_vocab()
        query = Query(qid="q1", text="water animals change", gold_id="fact")
        ex = build_probe_targets(query, corpus.get("fact"), vocab, seed=0)
        save_probe_dataset([ex], tmp_path / "probe.jsonl")
        loaded = load_probe_dataset(tmp_path / "probe.jsonl")
        assert len(loaded) == 1
        np.testing.assert_array_equal(loaded[0].pos, ex.pos)
        np.testing.assert_array_equal(loaded[0].neg, ex.neg)
        np.testing.assert_array_equal(loaded[0].query_terms, ex.query_terms)

    def test_model_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        model = ProbeModel(
            W=rng.normal(size=(6, 4)), bias=rng.normal(size=6),
            input_kind="tfidf", control="rand-label",
        )
        save_probe_model(model, tmp_path / "m.npz")
        loaded = load_probe_model(tmp_path / "m.npz")
        np.testing.assert_array_equal(loaded.W, model.W)
        np.testing.assert_array_equal(loaded.bias, model.bias)
        assert loaded.input_kind == "tfidf"
        assert loaded.control == "rand-label"
