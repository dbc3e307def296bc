from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from usagechange.corpus import FrequencyTable, Vocabulary
from usagechange.sgns import EmbeddingMatrix, TrainerConfig, train_embeddings
from usagechange.space import build_space
from usagechange.synthetic import PlantedConfig, generate_planted_pair


def make_space(vectors, freqs=None, neighbor_min_freq=0):
    """Space from ``{word: vector}``; every word gets count 1000 unless ``freqs`` says otherwise."""
    freqs = dict(freqs or {w: 1000 for w in vectors})
    vocab = Vocabulary.from_counts({w: freqs.get(w, 1) for w in vectors})
    V = np.array([vectors[w] for w in vocab.words], dtype=np.float64)
    return build_space(EmbeddingMatrix(vocab, V), FrequencyTable(freqs), neighbor_min_freq)


def random_space(n, d, seed, freq=1000):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    words = [f"w{i:05d}" for i in range(n)]
    return make_space(dict(zip(words, X)), {w: freq for w in words})


def freq_table(docs):
    return FrequencyTable(Counter(w for d in docs for w in d))


SMALL_PLANTED = PlantedConfig(
    n_words=500, n_topics=10, n_background=30, n_planted=1, tokens_per_corpus=200_000,
    n_polysemous=20, seed=3,
)
SMALL_DETECT = dict(k=50, min_count=50, stopword_top_n=30)


@pytest.fixture(scope="session")
def small_pair():
    return generate_planted_pair(SMALL_PLANTED)


@pytest.fixture(scope="session")
def small_spaces(small_pair):
    tc = TrainerConfig(dim=50, window=4, min_count=5, seed=1)
    fa, fb = freq_table(small_pair.docs_a), freq_table(small_pair.docs_b)
    ea, eb = train_embeddings(small_pair.docs_a, tc, fa), train_embeddings(small_pair.docs_b, tc, fb)
    return build_space(ea, fa, 20), build_space(eb, fb, 20)


def naive_top_k(words, X, freqs, query, k, neighbor_min_freq=0):
    """Full-scan oracle: every candidate's cosine in plain Python, sorted by (-cos, word)."""
    norms = np.sqrt((X * X).sum(axis=1))
    qi = words.index(query)
    scored = []
    for j, w in enumerate(words):
        if j == qi or freqs[w] <= neighbor_min_freq or norms[j] == 0:
            continue
        scored.append((-float(X[qi] @ X[j]) / (norms[qi] * norms[j]), w))
    scored.sort()
    return [w for _, w in scored[:k]]


ACCEPTANCE_RESULTS: list[str] = []


def record_criterion(number, passed, detail):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_RESULTS.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
