from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ortho_group

from usagechange.align import AlignmentProblem, OrthogonalMap, aligncos, aligncos_rank, procrustes_fit, svd_small
from usagechange.detect import DetectorConfig

from conftest import SMALL_DETECT, make_space

OPEN = DetectorConfig(k=5, min_count=1, drop_quantile=0, stopword_top_n=0)


def rotation(d, seed):
    return ortho_group.rvs(d, random_state=seed)


# SVD

def test_svd_identity():
    U, s, Vt = svd_small(np.eye(4))
    np.testing.assert_array_equal(s, np.ones(4))
    np.testing.assert_allclose(U @ Vt, np.eye(4), atol=1e-15)


def test_svd_diagonal():
    U, s, Vt = svd_small(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(s, [3, 1])
    np.testing.assert_allclose(np.abs(U), np.eye(2))
    np.testing.assert_allclose(np.abs(Vt), np.eye(2))


def test_svd_random_50_reconstruction():
    M = np.random.default_rng(0).normal(size=(50, 50))
    U, s, Vt = svd_small(M)
    assert np.linalg.norm(U * s @ Vt - M) / np.linalg.norm(M) <= 1e-8
    np.testing.assert_allclose(s, np.linalg.svd(M, compute_uv=False), rtol=1e-10)
    np.testing.assert_allclose(U.T @ U, np.eye(50), atol=1e-9)
    np.testing.assert_allclose(Vt @ Vt.T, np.eye(50), atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_svd_matches_numpy(m, n, seed, rank_drop):
    rng = np.random.default_rng(seed)
    r = max(1, min(m, n) - rank_drop)
    M = rng.normal(size=(m, r)) @ rng.normal(size=(r, n))
    M_before = M.copy()
    U, s, Vt = svd_small(M)
    np.testing.assert_array_equal(M, M_before)
    scale = max(1.0, np.abs(M).max())
    np.testing.assert_allclose(U * s @ Vt, M, atol=1e-9 * scale)
    np.testing.assert_allclose(s, np.linalg.svd(M, compute_uv=False), atol=1e-9 * scale)
    p = min(m, n)
    np.testing.assert_allclose(U.T @ U, np.eye(p), atol=1e-8)
    np.testing.assert_allclose(Vt @ Vt.T, np.eye(p), atol=1e-8)
    assert (np.diff(s) <= 1e-12).all()


def test_svd_rejects_bad_input():
    with pytest.raises(ValueError):
        svd_small(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        svd_small(np.ones(3))
    with pytest.raises(ValueError):
        svd_small(np.ones((5, 5)), max_dim=4)


# Procrustes

def test_identity_alignment():
    X = np.random.default_rng(1).normal(size=(40, 6))
    W = procrustes_fit(AlignmentProblem(X, X)).W
    np.testing.assert_allclose(W, np.eye(6), atol=1e-8)


def test_recovers_rotation():
    rng = np.random.default_rng(2)
    for seed in range(5):
        X = rng.normal(size=(200, 20))
        R = rotation(20, seed)
        W = procrustes_fit(AlignmentProblem(X, X @ R, unit_normalize=False)).W
        assert np.linalg.norm(W - R) <= 1e-6


def test_noisy_fit_beats_generating_rotation():
    rng = np.random.default_rng(3)
    for seed in range(5):
        X = rng.normal(size=(200, 20))
        R = rotation(20, seed + 10)
        Y = X @ R + rng.normal(scale=0.01, size=X.shape)
        m = procrustes_fit(AlignmentProblem(X, Y, unit_normalize=False))
        assert np.linalg.norm(X @ m.W - Y) <= np.linalg.norm(X @ R - Y) + 1e-9
        assert m.residual == pytest.approx(np.linalg.norm(X @ m.W - Y))


def test_exhaustive_search_in_two_dimensions():
    rng = np.random.default_rng(4)
    X, Y = rng.normal(size=(10, 2)), rng.normal(size=(10, 2))
    fitted = np.linalg.norm(X @ procrustes_fit(AlignmentProblem(X, Y, unit_normalize=False)).W - Y)
    theta = np.arange(0, 2 * np.pi, 1e-3)
    c, s = np.cos(theta), np.sin(theta)
    best = np.inf
    for refl in (1.0, -1.0):
        # W = [[c, -s*refl], [s, c*refl]] spans rotations and reflections
        W = np.stack([np.stack([c, -s * refl]), np.stack([s, c * refl])])  # (2, 2, T)
        R = np.einsum("ni,ijt->tnj", X, W) - Y
        best = min(best, np.sqrt((R**2).sum(axis=(1, 2))).min())
    assert best >= fitted - 1e-6


def test_preprocessing_order_and_flags():
    X = np.array([[3.0, 4.0], [1.0, 0.0], [0.0, 2.0]])
    p = AlignmentProblem(X, X, unit_normalize=True, mean_center=True)
    Xp, _ = p.prepared()
    U = X / np.linalg.norm(X, axis=1, keepdims=True)
    np.testing.assert_allclose(Xp, U - U.mean(axis=0))
    raw, _ = AlignmentProblem(X, X, unit_normalize=False).prepared()
    np.testing.assert_array_equal(raw, X)


def test_alignment_problem_validation():
    with pytest.raises(ValueError):
        AlignmentProblem(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.warns(UserWarning, match="underdetermined"):
        AlignmentProblem(np.eye(2, 4), np.eye(2, 4))
    with pytest.raises(ValueError):
        procrustes_fit(AlignmentProblem(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2)))
    with pytest.raises(ValueError, match="zero"):
        procrustes_fit(AlignmentProblem(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([[0.0, 1.0], [0.0, 1.0]])))


def test_orthogonal_map_roundtrip_and_validation(tmp_path):
    R = rotation(5, 0)
    m = OrthogonalMap(R)
    m.save(tmp_path / "w.txt")
    np.testing.assert_array_equal(OrthogonalMap.load(tmp_path / "w.txt").W, R)
    assert abs(abs(m.det) - 1) < 1e-12
    with pytest.raises(ValueError):
        OrthogonalMap(2 * np.eye(3))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 15))
def test_fitted_map_is_orthogonal(seed, d):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(3 * d, d)), rng.normal(size=(3 * d, d))
    W = procrustes_fit(AlignmentProblem(X, Y)).W
    np.testing.assert_allclose(W.T @ W, np.eye(d), atol=1e-9)


# AlignCos

def _space_pair(seed, n=150, d=12):
    rng = np.random.default_rng(seed)
    words = [f"w{i:03d}" for i in range(n)]
    X = rng.normal(size=(n, d))
    return words, X


def test_rotated_space_scores_vanish():
    words, X = _space_pair(5)
    R = rotation(12, 5)
    a, b = make_space(dict(zip(words, X))), make_space(dict(zip(words, X @ R)))
    ranking, mapping = aligncos(a, b, OPEN)
    assert max(abs(e.score) for e in ranking) <= 1e-6
    assert np.linalg.norm(mapping.W - R) <= 1e-6


def test_identical_spaces_score_zero():
    words, X = _space_pair(6)
    s = make_space(dict(zip(words, X)))
    assert max(abs(e.score) for e in aligncos_rank(s, s, OPEN)) <= 1e-9


def test_invariant_to_common_orthogonal_transform_of_a():
    words, X = _space_pair(7)
    rng = np.random.default_rng(7)
    Y = X + rng.normal(scale=rng.uniform(0, 1, size=(len(words), 1)), size=X.shape)
    b = make_space(dict(zip(words, Y)))
    r1 = aligncos_rank(make_space(dict(zip(words, X))), b, OPEN)
    r2 = aligncos_rank(make_space(dict(zip(words, X @ rotation(12, 8)))), b, OPEN)
    assert r1.words == r2.words
    np.testing.assert_allclose([e.score for e in r1], [e.score for e in r2], atol=1e-9)


def test_planted_word_above_median(small_pair, small_spaces):
    a, b = small_spaces
    ranking = aligncos_rank(a, b, DetectorConfig(**SMALL_DETECT))
    scores = np.array([e.score for e in ranking])
    for w in small_pair.planted:
        assert ranking.score_of(w) > np.median(scores)
    assert ranking.method_tag == "aligncos" and ranking.provenance["n_shared"] == len(ranking)
