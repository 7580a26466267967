import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hybridir.corpus import AnalyzerConfig, Corpus, Document, Query


@pytest.fixture
def plain_analyzer() -> AnalyzerConfig:
    """No stemming, no stopwords: tokens pass through unchanged."""
    return AnalyzerConfig(lowercase=True, stem=False, stopwords=frozenset(), min_count=1)


@pytest.fixture
def default_analyzer() -> AnalyzerConfig:
    return AnalyzerConfig()


def make_corpus(texts: list[str], contexts: list[str | None] | None = None) -> Corpus:
    contexts = contexts or [None] * len(texts)
    return Corpus(
        Document(id=f"d{i}", sentence=text, context=ctx)
        for i, (text, ctx) in enumerate(zip(texts, contexts))
    )


def random_token_corpus(
    rng: np.random.Generator, n_docs: int, vocab_size: int, max_len: int = 12
) -> tuple[Corpus, list[list[str]], list[str]]:
    """Random corpus over a closed vocabulary of analyzer-stable words.

    Returns the corpus, the exact token lists (what a pass-through analyzer
    produces), and the word pool.
    """
    pool = [f"w{chr(ord('a') + i // 26)}{chr(ord('a') + i % 26)}x" for i in range(vocab_size)]
    token_lists = []
    docs = []
    for i in range(n_docs):
        length = int(rng.integers(1, max_len + 1))
        tokens = [pool[int(j)] for j in rng.integers(0, vocab_size, size=length)]
        token_lists.append(tokens)
        docs.append(Document(id=f"d{i:03d}", sentence=" ".join(tokens)))
    return Corpus(docs), token_lists, pool


def random_query(rng: np.random.Generator, pool: list[str], max_len: int = 6) -> str:
    length = int(rng.integers(1, max_len + 1))
    return " ".join(pool[int(j)] for j in rng.integers(0, len(pool), size=length))


def make_query(qid: str, text: str, gold_id: str = "d0") -> Query:
    return Query(qid=qid, text=text, gold_id=gold_id)


def make_identity_task(
    seed: int,
    n_train: int = 200,
    n_dev: int = 40,
    vocab_size: int = 24,
    terms_per_example: int = 4,
):
    """Probe task whose input dimension j directly encodes term j.

    Inputs are multi-hot vectors over the example's positive terms, so a
    probe reading the input can reach perfect MAP; random-input controls
    cannot. Query terms equal the positive set (fact-only metrics are empty
    by construction and skipped).
    """
    from hybridir.probe import ProbeExample

    rng = np.random.default_rng(seed)
    examples = []
    for i in range(n_train + n_dev):
        pos = np.sort(rng.choice(vocab_size, size=terms_per_example, replace=False))
        complement = np.setdiff1d(np.arange(vocab_size), pos)
        neg = np.sort(rng.choice(complement, size=terms_per_example, replace=False))
        x = np.zeros(vocab_size)
        x[pos] = 1.0
        examples.append(
            ProbeExample(
                qid=f"syn{i:03d}",
                pos=pos,
                neg=neg,
                query_terms=pos,
                fact_terms=pos,
                x=x,
            )
        )
    return examples[:n_train], examples[n_train:], vocab_size
