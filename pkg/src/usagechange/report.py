"""Interpretability outputs: neighbor diff reports and 2-D neighborhood projections."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .corpus import open_text
from .space import EmbeddingSpace, neighbor_sets

__all__ = [
    "NeighborReport",
    "Projection2D",
    "neighbor_report",
    "tsne",
    "project_neighbors_2d",
    "neighborhood_projections",
    "emit_svg",
    "save_projection_tsv",
    "ORIGINS",
]

ORIGINS = ("A-only", "B-only", "shared", "target")
COLORS = {"A-only": "#17becf", "B-only": "#8e44ad", "shared": "#f28e2b", "target": "#111111"}


@dataclass(frozen=True)
class NeighborReport:
    word: str
    top_a: tuple[str, ...]
    top_b: tuple[str, ...]
    intersection_size_at_k: int

    def to_json(self) -> dict:
        return {
            "word": self.word,
            "intersection_size": self.intersection_size_at_k,
            "top_a": list(self.top_a),
            "top_b": list(self.top_b),
        }


def neighbor_report(
    space_a: EmbeddingSpace, space_b: EmbeddingSpace, w: str, n: int = 10, k: int = 1000
) -> NeighborReport:
    """First ``n`` neighbors of ``w`` in each space once the shared top-k neighbors are removed."""
    for space in (space_a, space_b):
        if w not in space:
            raise KeyError(f"word {w!r} not in vocabulary")
    na = neighbor_sets(space_a, [w], k)[w]
    nb = neighbor_sets(space_b, [w], k)[w]
    shared = na.as_set & nb.as_set
    top_a = tuple(x for x in na.words if x not in shared)[:n]
    top_b = tuple(x for x in nb.words if x not in shared)[:n]
    return NeighborReport(w, top_a, top_b, len(shared))


# --- projections ---------------------------------------------------------------

@dataclass(frozen=True)
class Projection2D:
    points: tuple[tuple[str, float, float, str], ...]
    space_tag: str = ""

    def __post_init__(self):
        points = tuple((str(w), float(x), float(y), str(o)) for w, x, y, o in self.points)
        if sum(o == "target" for *_, o in points) != 1:
            raise ValueError("a projection must contain exactly one target point")
        for w, x, y, o in points:
            if o not in ORIGINS:
                raise ValueError(f"unknown origin {o!r} for {w!r}")
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite coordinates for {w!r}")
        object.__setattr__(self, "points", points)

    @property
    def coords(self) -> np.ndarray:
        return np.array([[x, y] for _, x, y, _ in self.points])

    @property
    def words(self) -> list[str]:
        return [w for w, *_ in self.points]


def _conditional_probabilities(D: np.ndarray, perplexity: float, tol: float = 1e-5, max_iter: int = 200):
    """Row-wise Gaussian affinities whose entropy matches ``log(perplexity)``."""
    n = D.shape[0]
    P = np.zeros((n, n))
    target = math.log(perplexity)
    for i in range(n):
        d = np.delete(D[i], i)
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            p = np.exp(-d * beta)
            sp = p.sum()
            H = math.log(sp) + beta * float(d @ p) / sp
            if abs(H - target) < tol:
                break
            if H > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        P[i, np.arange(n) != i] = p / sp
    return P


def tsne(
    X,
    seed: int = 0,
    perplexity: float | None = None,
    n_iter: int = 1000,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
    exaggeration_iters: int = 250,
) -> np.ndarray:
    """Exact O(n^2) t-SNE into two dimensions.

    Perplexity defaults to ``min(30, (n - 1) / 3)``. Momentum is 0.5 during
    early exaggeration and 0.8 afterwards, with per-parameter adaptive gains.
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValueError("t-SNE needs at least 2 points")
    if perplexity is None:
        perplexity = min(30.0, (n - 1) / 3.0)
    sq = np.einsum("ij,ij->i", X, X)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0)
    P = _conditional_probabilities(D, perplexity)
    P = np.maximum((P + P.T) / (2.0 * n), 1e-12)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    for it in range(n_iter):
        exaggerate = it < exaggeration_iters
        PP = P * early_exaggeration if exaggerate else P
        momentum = 0.5 if exaggerate else 0.8
        sy = np.einsum("ij,ij->i", Y, Y)
        num = 1.0 / (1.0 + np.maximum(sy[:, None] + sy[None, :] - 2.0 * Y @ Y.T, 0.0))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (PP - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
    return Y


def _pca2(X: np.ndarray) -> np.ndarray:
    Xc = X - X.mean(axis=0)
    _, s, Vt = np.linalg.svd(Xc, full_matrices=False)
    comps = Vt[:2]
    # Sign convention: the largest-magnitude loading of each component is positive.
    signs = np.sign(comps[np.arange(len(comps)), np.abs(comps).argmax(axis=1)])
    signs[signs == 0] = 1.0
    Y = Xc @ (comps * signs[:, None]).T
    if Y.shape[1] < 2:
        Y = np.hstack([Y, np.zeros((Y.shape[0], 2 - Y.shape[1]))])
    return Y


def project_neighbors_2d(
    space: EmbeddingSpace,
    w: str,
    others: Iterable[str],
    seed: int = 0,
    origins: Mapping[str, str] | None = None,
    space_tag: str = "",
    **tsne_options,
) -> Projection2D:
    """Project ``w`` and ``others`` to 2-D: exact t-SNE, or PCA below 10 points.

    ``origins`` labels each other word as ``A-only``, ``B-only`` or ``shared``
    (the default).
    """
    rest = sorted(set(others) - {w})
    words = [w] + rest
    for x in words:
        if x not in space:
            raise KeyError(f"word {x!r} not in vocabulary")
    if len(words) < 3:
        raise ValueError(f"need at least 3 points to project, got {len(words)}")
    X = np.stack([space.unit(x) for x in words])
    Y = _pca2(X) if len(words) < 10 else tsne(X, seed=seed, **tsne_options)
    origins = origins or {}
    points = tuple(
        (x, float(Y[i, 0]), float(Y[i, 1]), "target" if i == 0 else origins.get(x, "shared"))
        for i, x in enumerate(words)
    )
    return Projection2D(points, space_tag)


def neighborhood_projections(
    space_a: EmbeddingSpace,
    space_b: EmbeddingSpace,
    w: str,
    n: int = 50,
    seed: int = 0,
    **tsne_options,
) -> tuple[Projection2D, Projection2D]:
    """One projection per space of ``w`` with its top-``n`` neighbors from both spaces.

    Neighbors missing from a space's vocabulary are left out of that space's plot.
    """
    na = neighbor_sets(space_a, [w], n)[w].as_set
    nb = neighbor_sets(space_b, [w], n)[w].as_set
    origins = {x: "shared" if x in na and x in nb else ("A-only" if x in na else "B-only") for x in na | nb}
    out = []
    for space, tag in ((space_a, "A"), (space_b, "B")):
        present = [x for x in origins if x in space]
        out.append(project_neighbors_2d(space, w, present, seed, origins, tag, **tsne_options))
    return out[0], out[1]


def emit_svg(p: Projection2D, path: str | Path, title: str | None = None,
             width: int = 900, height: int = 700) -> None:
    """Render a projection as a standalone SVG scatter plot with word labels."""
    margin = 60
    coords = p.coords
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    span[span == 0] = 1.0
    scale = min((width - 2 * margin) / span[0], (height - 2 * margin) / span[1])
    off_x = (width - scale * span[0]) / 2
    off_y = (height - scale * span[1]) / 2

    def px(x, y):
        return off_x + (x - lo[0]) * scale, height - (off_y + (y - lo[1]) * scale)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    if title is None:
        target = next(w for w, *_, o in p.points if o == "target")
        title = f"{target} ({p.space_tag} space)" if p.space_tag else target
    lines.append(f'<text x="{width / 2:.1f}" y="24" font-size="16" text-anchor="middle">{escape(title)}</text>')
    for word, x, y, origin in sorted(p.points, key=lambda pt: pt[3] == "target"):
        cx, cy = px(x, y)
        color = COLORS[origin]
        if origin == "target":
            lines.append(
                f'<rect x="{cx - 6:.2f}" y="{cy - 6:.2f}" width="12" height="12" fill="{color}" '
                f'class="point {origin}"/>'
            )
            weight = ' font-weight="bold"'
        else:
            lines.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="{color}" class="point {origin}"/>')
            weight = ""
        lines.append(
            f'<text x="{cx + 7:.2f}" y="{cy - 5:.2f}" font-size="11" fill="{color}"{weight} '
            f'class="label">{escape(word)}</text>'
        )
    ly = height - 18
    for i, origin in enumerate(ORIGINS):
        lx = 20 + i * 110
        lines.append(f'<circle cx="{lx:.1f}" cy="{ly - 4:.1f}" r="5" fill="{COLORS[origin]}"/>')
        lines.append(f'<text x="{lx + 9:.1f}" y="{ly:.1f}" font-size="12">{origin}</text>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def save_projection_tsv(p: Projection2D, path: str | Path) -> None:
    with open_text(path, "w") as fh:
        fh.write("word\tx\ty\torigin\n")
        for w, x, y, o in p.points:
            fh.write(f"{w}\t{x!r}\t{y!r}\t{o}\n")


def save_reports_json(path: str | Path, reports: Sequence[NeighborReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([r.to_json() for r in reports], fh, indent=2, ensure_ascii=False)
        fh.write("\n")
