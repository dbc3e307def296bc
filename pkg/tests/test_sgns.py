from __future__ import annotations

import math

import numpy as np
import pytest

from usagechange.corpus import Vocabulary
from usagechange.sgns import (
    EmbeddingMatrix,
    TrainerConfig,
    _pair_update,
    load_embeddings,
    save_embeddings,
    sgns_loss_and_grad,
    sgns_pair_loss,
    train_embeddings,
)


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def two_topic_corpus(seed, n_docs=2000, doc_len=10, size=20):
    """Documents drawn from one of two disjoint 20-word topics."""
    rng = np.random.default_rng(seed)
    topics = [[f"a{i}" for i in range(size)], [f"b{i}" for i in range(size)]]
    return [[topics[t][j] for j in rng.integers(size, size=doc_len)] for t in rng.integers(2, size=n_docs)]


# objective

def test_zero_vectors_loss_and_gradient():
    loss, (dc, dp, dn) = sgns_loss_and_grad(np.zeros(4), np.zeros(4), np.zeros((1, 4)))
    assert loss == pytest.approx(2 * math.log(2), abs=1e-15)
    assert not dc.any() and not dp.any() and not dn.any()


def test_aligned_large_vectors_give_vanishing_loss():
    v = np.full(5, 10.0)
    loss, _ = sgns_loss_and_grad(v, v, np.zeros((0, 5)))
    assert 0 <= loss < 1e-12


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d, n = rng.integers(2, 12), rng.integers(1, 6)
        v, cp, cn = rng.normal(size=d), rng.normal(size=d), rng.normal(size=(n, d))
        _, (dc, dp, dn) = sgns_loss_and_grad(v, cp, cn)
        assert rel_err(dc, central_difference(lambda x: sgns_loss_and_grad(x, cp, cn)[0], v)) < 1e-4
        assert rel_err(dp, central_difference(lambda x: sgns_loss_and_grad(v, x, cn)[0], cp)) < 1e-4
        assert rel_err(dn, central_difference(lambda x: sgns_loss_and_grad(v, cp, x)[0], cn)) < 1e-4


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        sgns_loss_and_grad(np.zeros(3), np.zeros(4), np.zeros((1, 3)))


def test_kernel_step_is_negative_lr_times_gradient():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d, lr = 8, 0.05
        syn0 = rng.normal(size=(6, d))
        syn1 = rng.normal(size=(6, d))
        negs = np.array([2, 3, 5], dtype=np.int64)
        _, (dc, dp, dn) = sgns_loss_and_grad(syn0[0], syn1[1], syn1[negs])
        s0, s1 = syn0.copy(), syn1.copy()
        _pair_update(s0, s1, 0, 1, negs, 3, lr, np.zeros(d))
        np.testing.assert_allclose(s0[0] - syn0[0], -lr * dc, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(s1[1] - syn1[1], -lr * dp, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(s1[negs] - syn1[negs], -lr * dn, rtol=1e-9, atol=1e-12)
        np.testing.assert_array_equal(s0[1:], syn0[1:])


def test_pair_loss_matches_per_pair_objective():
    rng = np.random.default_rng(2)
    V, C = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    pairs = np.array([[0, 1], [2, 3]])
    negs = np.array([[4, 2], [1, 0]])
    expected = np.mean([sgns_loss_and_grad(V[c], C[o], C[n])[0] for (c, o), n in zip(pairs, negs)])
    assert sgns_pair_loss(V, C, pairs, negs) == pytest.approx(expected, rel=1e-12)


# training

def test_config_validation():
    for bad in (dict(dim=0), dict(window=0), dict(negatives=0), dict(epochs=0), dict(initial_lr=0), dict(workers=0)):
        with pytest.raises(ValueError):
            TrainerConfig(**bad)


def test_deterministic_training_is_reproducible():
    docs = two_topic_corpus(0, 300)
    cfg = TrainerConfig(dim=16, min_count=1, epochs=2, seed=7)
    a, b = train_embeddings(docs, cfg), train_embeddings(docs, cfg)
    assert a.vocab.words == b.vocab.words
    assert a.vectors.tobytes() == b.vectors.tobytes()
    c = train_embeddings(docs, TrainerConfig(dim=16, min_count=1, epochs=2, seed=8))
    assert not np.array_equal(a.vectors, c.vectors)


def test_initialization_range():
    docs = two_topic_corpus(0, 50)
    cfg = TrainerConfig(dim=20, min_count=1, epochs=1, initial_lr=1e-12)
    E = train_embeddings(docs, cfg)
    assert np.abs(E.vectors).max() <= 0.5 / 20 + 1e-9


def test_min_count_controls_vocabulary():
    docs = [["a", "a", "a", "b"]] * 2
    assert train_embeddings(docs, TrainerConfig(dim=4, min_count=3)).vocab.words == ("a",)
    with pytest.raises(ValueError):
        train_embeddings(docs, TrainerConfig(dim=4, min_count=100))


def test_cooccurring_pair_grows_more_similar():
    # Long alternating sentences; with no other words the cosine climbs from
    # its random start and then saturates just below 1.
    docs = [["a", "b"] * 50 for _ in range(40)]
    runs = []
    for seed in range(10):
        cos = []
        for epochs, lr in ((1, 1e-12), (1, 0.025), (2, 0.025), (4, 0.025)):
            E = train_embeddings(docs, TrainerConfig(dim=10, min_count=1, epochs=epochs, initial_lr=lr, seed=seed))
            a, b = E["a"].astype(float), E["b"].astype(float)
            cos.append(a @ b / np.linalg.norm(a) / np.linalg.norm(b))
        runs.append(cos)
    init, one, two, four = np.mean(runs, axis=0)
    assert init < one < two
    assert four > 0.95


def test_topic_clusters_are_recovered():
    docs = two_topic_corpus(3, 4000)
    E = train_embeddings(docs, TrainerConfig(dim=30, min_count=1, seed=3))
    U = E.vectors / np.linalg.norm(E.vectors, axis=1, keepdims=True)
    label = np.array([w[0] for w in E.vocab.words])
    S = U @ U.T
    same = label[:, None] == label[None, :]
    off_diag = ~np.eye(len(label), dtype=bool)
    assert S[same & off_diag].mean() > S[~same].mean() + 0.2


def _heldout_pairs(docs, vocab, rng, n=2000, window=4, negatives=5):
    ids = vocab.ids
    pairs = []
    while len(pairs) < n:
        doc = docs[rng.integers(len(docs))]
        i = rng.integers(len(doc))
        j = i + rng.choice([x for x in range(-window, window + 1) if x and 0 <= i + x < len(doc)])
        pairs.append((ids[doc[i]], ids[doc[j]]))
    return np.array(pairs), rng.integers(len(vocab), size=(n, negatives))


def test_one_epoch_lowers_heldout_loss():
    successes = 0
    for seed in range(100):
        docs = two_topic_corpus(seed, 600)
        train, held = docs[:500], docs[500:]
        E = train_embeddings(train, TrainerConfig(dim=20, min_count=1, epochs=1, seed=seed))
        pairs, negs = _heldout_pairs(held, E.vocab, np.random.default_rng(seed))
        init = sgns_pair_loss(E.vectors, np.zeros_like(E.context_vectors), pairs, negs)
        assert init == pytest.approx(6 * math.log(2))
        successes += sgns_pair_loss(E.vectors, E.context_vectors, pairs, negs) <= init
    assert successes >= 95


def test_row_norms_stay_bounded():
    docs = two_topic_corpus(5, 3000)
    E = train_embeddings(docs, TrainerConfig(dim=50, min_count=1, seed=5))
    assert np.isfinite(E.vectors).all()
    assert np.linalg.norm(E.vectors, axis=1).max() <= 1e3


def test_parallel_mode_runs():
    docs = two_topic_corpus(6, 2000)
    E = train_embeddings(docs, TrainerConfig(dim=16, min_count=1, deterministic=False, workers=2))
    assert np.isfinite(E.vectors).all() and E.vectors.any()


def test_streaming_matches_cached():
    docs = two_topic_corpus(7, 200)
    cfg = TrainerConfig(dim=8, min_count=1, epochs=2)
    a = train_embeddings(docs, cfg)
    b = train_embeddings(docs, cfg, cache_limit=0)
    np.testing.assert_array_equal(a.vectors, b.vectors)


# formats

def test_text_format_example(tmp_path):
    p = tmp_path / "e.vec"
    p.write_text("2 3\nx 1 2 3\ny 4 5 6\n")
    E = load_embeddings(p)
    assert E.vectors.shape == (2, 3) and E.vocab.words == ("x", "y")
    assert E["y"].tolist() == [4, 5, 6]


def test_text_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    vocab = Vocabulary(("a", "b", "c"), np.array([3, 2, 1]))
    E = EmbeddingMatrix(vocab, rng.normal(size=(3, 7)).astype(np.float32))
    save_embeddings(E, tmp_path / "e.vec.gz")
    F = load_embeddings(tmp_path / "e.vec.gz")
    assert F.vocab.words == E.vocab.words
    assert np.abs(F.vectors - E.vectors).max() <= 1e-8


def test_binary_format(tmp_path):
    p = tmp_path / "e.bin"
    rows = {"x": [1.0, 2.0], "yy": [3.0, -4.5]}
    with open(p, "wb") as fh:
        fh.write(b"2 2\n")
        for w, r in rows.items():
            fh.write(w.encode() + b" " + np.array(r, dtype="<f4").tobytes() + b"\n")
    E = load_embeddings(p)
    assert E.vocab.words == ("x", "yy") and E["yy"].tolist() == [3.0, -4.5]


@pytest.mark.parametrize(
    "content, match",
    [
        ("3 2\na 1 2\nb 3 4\n", "declares 3"),
        ("2\na 1 2\n", "header"),
        ("1 2\na 1 x\n", "non-numeric"),
        ("2 2\na 1 2\na 3 4\n", "duplicate"),
        ("1 2\na 1\n", "expected"),
    ],
)
def test_malformed_text_files(tmp_path, content, match):
    p = tmp_path / "bad.vec"
    p.write_text(content)
    with pytest.raises(ValueError, match=match):
        load_embeddings(p)
