"""Orthogonal Procrustes alignment and the cosine-distance (AlignCos) baseline ranking."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

from .detect import DetectorConfig, RankedList, _as_ranked, order_by_score, shared_eligible_words
from .space import EmbeddingSpace

__all__ = [
    "AlignmentProblem",
    "OrthogonalMap",
    "svd_small",
    "procrustes_fit",
    "aligncos",
    "aligncos_rank",
]

SVD_MAX_DIM = 1024


@njit(fastmath=False, cache=True)
def _jacobi_sweeps(B, Vr, tol, max_sweeps):
    # One-sided (Hestenes) Jacobi on the rows of B = M.T: rotate pairs of rows
    # until all are mutually orthogonal. Vr accumulates the same rotations.
    n, m = B.shape
    for sweep in range(max_sweeps):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for k in range(m):
                    alpha += B[i, k] * B[i, k]
                    beta += B[j, k] * B[j, k]
                    gamma += B[i, k] * B[j, k]
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for k in range(m):
                    bi = B[i, k]
                    bj = B[j, k]
                    B[i, k] = c * bi - s * bj
                    B[j, k] = s * bi + c * bj
                for k in range(n):
                    vi = Vr[i, k]
                    vj = Vr[j, k]
                    Vr[i, k] = c * vi - s * vj
                    Vr[j, k] = s * vi + c * vj
        if not rotated:
            return sweep + 1
    return -1


def _complete_basis(U: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Replace the columns of ``U`` not marked ``filled`` with an orthonormal completion."""
    m = U.shape[0]
    basis = [U[:, j] for j in np.flatnonzero(filled)]
    out = U.copy()
    e = 0
    for j in np.flatnonzero(~filled):
        while True:
            v = np.zeros(m)
            v[e % m] = 1.0
            e += 1
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            norm = np.linalg.norm(v)
            if norm > 1e-6:
                break
        v /= norm
        basis.append(v)
        out[:, j] = v
    return out


def svd_small(M, tol: float = 1e-10, max_sweeps: int = 100, max_dim: int = SVD_MAX_DIM):
    """Singular value decomposition of a small dense matrix by one-sided Jacobi rotations.

    Returns ``(U, s, Vt)`` with ``M = U @ diag(s) @ Vt``, singular values sorted
    descending. For an ``m x n`` input with ``m >= n``, ``U`` is ``m x n``;
    wide inputs are handled through their transpose.

    Raises
    ------
    ValueError
        If ``M`` contains NaN/Inf, is not 2-D, or exceeds ``max_dim``.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError("svd_small expects a 2-D matrix")
    if max(M.shape) > max_dim:
        raise ValueError(f"matrix of shape {M.shape} exceeds the configured cap of {max_dim}")
    if not np.isfinite(M).all():
        raise ValueError("svd_small input contains NaN or Inf")
    m, n = M.shape
    if m < n:
        U, s, Vt = svd_small(M.T, tol, max_sweeps, max_dim)
        return Vt.T, s, U.T
    B = np.array(M.T, order="C", copy=True)
    Vr = np.eye(n)
    sweeps = _jacobi_sweeps(B, Vr, tol, max_sweeps)
    if sweeps < 0:
        warnings.warn(f"Jacobi SVD did not converge in {max_sweeps} sweeps", RuntimeWarning, stacklevel=2)
    s = np.sqrt(np.einsum("ij,ij->i", B, B))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    B = B[order]
    Vt = Vr[order]
    cutoff = s[0] * max(m, n) * np.finfo(np.float64).eps if n else 0.0
    filled = s > cutoff
    U = np.zeros((m, n))
    U[:, filled] = (B[filled] / s[filled, None]).T
    if not filled.all():
        U = _complete_basis(U, filled)
        s = np.where(filled, s, 0.0)
    return U, s, Vt


@dataclass(frozen=True)
class AlignmentProblem:
    """Paired rows: ``X[i]`` (space A) and ``Y[i]`` (space B) embed the same word."""

    X: np.ndarray
    Y: np.ndarray
    unit_normalize: bool = True
    mean_center: bool = False

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        Y = np.asarray(self.Y, dtype=np.float64)
        if X.ndim != 2 or X.shape != Y.shape:
            raise ValueError(f"X and Y must be matrices of equal shape, got {X.shape} and {Y.shape}")
        if X.shape[0] < X.shape[1]:
            warnings.warn(
                f"only {X.shape[0]} anchor rows for dimension {X.shape[1]}; the map is underdetermined",
                stacklevel=3,
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    def prepared(self) -> tuple[np.ndarray, np.ndarray]:
        """``X`` and ``Y`` after the optional unit normalization and mean centering, in that order."""
        return _prepare(self.X, self.unit_normalize, self.mean_center), _prepare(
            self.Y, self.unit_normalize, self.mean_center
        )


def _prepare(A, unit_normalize, mean_center):
    if unit_normalize:
        norms = np.linalg.norm(A, axis=1, keepdims=True)
        if (norms == 0).any():
            raise ValueError("cannot unit-normalize an all-zero row")
        A = A / norms
    if mean_center:
        A = A - A.mean(axis=0)
    if (~A.any(axis=1)).any():
        raise ValueError("all-zero row after preprocessing")
    return A


@dataclass(frozen=True)
class OrthogonalMap:
    """An orthogonal ``d x d`` matrix ``W`` mapping row vectors of space A onto space B."""

    W: np.ndarray
    residual: float = float("nan")

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("W must be square")
        err = np.abs(W.T @ W - np.eye(W.shape[0])).max() if W.size else 0.0
        if err > 1e-8:
            raise ValueError(f"W is not orthogonal (max |W'W - I| = {err:.2e})")
        object.__setattr__(self, "W", W)

    def __call__(self, X):
        return np.asarray(X) @ self.W

    @property
    def det(self) -> float:
        return float(np.linalg.det(self.W))

    def save(self, path: str | Path) -> None:
        np.savetxt(path, self.W, fmt="%.17g")

    @classmethod
    def load(cls, path: str | Path) -> "OrthogonalMap":
        return cls(np.atleast_2d(np.loadtxt(path, dtype=np.float64)))


def procrustes_fit(p: AlignmentProblem) -> OrthogonalMap:
    """Orthogonal ``W`` minimizing ``||X W - Y||_F``: ``W = U Vt`` for ``X'Y = U S Vt``."""
    X, Y = p.prepared()
    C = X.T @ Y
    if not C.any():
        raise ValueError("cross-covariance X'Y is zero; the alignment is undefined")
    U, _, Vt = svd_small(C)
    W = U @ Vt
    residual = float(np.linalg.norm(X @ W - Y))
    return OrthogonalMap(W, residual)


def aligncos(
    space_a: EmbeddingSpace,
    space_b: EmbeddingSpace,
    cfg: DetectorConfig | None = None,
    unit_normalize: bool = True,
    mean_center: bool = False,
) -> tuple[RankedList, OrthogonalMap]:
    """Align A onto B over all shared eligible words and rank by ``1 - cos(x W, y)``.

    Every shared eligible word serves as an alignment anchor; there is no seed
    lexicon and no further filtering.
    """
    cfg = cfg or DetectorConfig()
    words = sorted(shared_eligible_words(space_a, space_b, cfg))
    X = np.stack([space_a.vector(w) for w in words])
    Y = np.stack([space_b.vector(w) for w in words])
    problem = AlignmentProblem(X, Y, unit_normalize, mean_center)
    mapping = procrustes_fit(problem)
    Xp, Yp = problem.prepared()
    XW = mapping(Xp)
    cos = np.einsum("ij,ij->i", XW, Yp) / (np.linalg.norm(XW, axis=1) * np.linalg.norm(Yp, axis=1))
    scores = {w: float(1.0 - c) for w, c in zip(words, cos)}
    provenance = {
        "config": cfg.as_dict(),
        "n_shared": len(words),
        "unit_normalize": unit_normalize,
        "mean_center": mean_center,
        "residual": mapping.residual,
    }
    return _as_ranked(order_by_score(scores, space_a, space_b), "aligncos", provenance), mapping


def aligncos_rank(
    space_a: EmbeddingSpace,
    space_b: EmbeddingSpace,
    cfg: DetectorConfig | None = None,
    unit_normalize: bool = True,
    mean_center: bool = False,
) -> RankedList:
    return aligncos(space_a, space_b, cfg, unit_normalize, mean_center)[0]
