"""Queryable embedding spaces with exact top-k cosine neighbor search."""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from numba import njit

from .corpus import FrequencyTable, Vocabulary, open_text
from .sgns import EmbeddingMatrix

__all__ = [
    "EmbeddingSpace",
    "NeighborSet",
    "build_space",
    "cosine",
    "top_k_neighbors",
    "neighbor_sets",
    "save_neighbor_dump",
    "load_neighbor_dump",
]

DEFAULT_NEIGHBOR_MIN_FREQ = 100


@dataclass(frozen=True)
class NeighborSet:
    target: str
    k: int
    ordered: tuple[tuple[str, float], ...]
    as_set: frozenset[str] = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "ordered", tuple(self.ordered))
        object.__setattr__(self, "as_set", frozenset(w for w, _ in self.ordered))

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.ordered]

    def __len__(self) -> int:
        return len(self.ordered)


@dataclass(frozen=True, eq=False)
class EmbeddingSpace:
    """Unit-normalized embedding matrix with corpus frequencies and a neighbor filter.

    ``vocab.freq`` holds each word's raw count in the space's own corpus;
    ``candidates`` marks the words allowed to appear as neighbors
    (``freq > neighbor_min_freq``).
    """

    vocab: Vocabulary
    unit_matrix: np.ndarray
    frequencies: FrequencyTable
    neighbor_min_freq: int = DEFAULT_NEIGHBOR_MIN_FREQ
    vectors: np.ndarray | None = field(default=None, repr=False)
    candidates: np.ndarray = field(init=False, repr=False)
    _lex_rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cand = self.vocab.freq > self.neighbor_min_freq
        cand.setflags(write=False)
        object.__setattr__(self, "candidates", cand)
        order = sorted(range(len(self.vocab)), key=self.vocab.words.__getitem__)
        lex = np.empty(len(order), dtype=np.int64)
        lex[order] = np.arange(len(order))
        object.__setattr__(self, "_lex_rank", lex)
        self.unit_matrix.setflags(write=False)

    @property
    def words(self) -> tuple[str, ...]:
        return self.vocab.words

    @property
    def dim(self) -> int:
        return self.unit_matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __contains__(self, word: str) -> bool:
        return word in self.vocab

    def freq(self, word: str) -> int:
        return int(self.vocab.freq[self.vocab.index(word)])

    def unit(self, word: str) -> np.ndarray:
        return self.unit_matrix[self.vocab.index(word)]

    def vector(self, word: str) -> np.ndarray:
        """The raw (unnormalized) vector of ``word``."""
        source = self.vectors if self.vectors is not None else self.unit_matrix
        return source[self.vocab.index(word)]


def build_space(
    E: EmbeddingMatrix,
    freq: FrequencyTable,
    neighbor_min_freq: int = DEFAULT_NEIGHBOR_MIN_FREQ,
) -> EmbeddingSpace:
    """Attach corpus frequencies to ``E`` and normalize its rows.

    Words with an all-zero vector are dropped with a warning. Words missing from
    ``freq`` get frequency 0 and so never qualify as neighbors.
    """
    vectors = np.asarray(E.vectors, dtype=np.float64)
    norms = np.linalg.norm(vectors, axis=1)
    nonzero = norms > 0
    if not nonzero.any():
        raise ValueError("all embedding vectors are zero")
    if not nonzero.all():
        dropped = [w for w, ok in zip(E.vocab.words, nonzero) if not ok]
        warnings.warn(
            f"dropping {len(dropped)} word(s) with zero vectors: {', '.join(dropped[:10])}",
            stacklevel=2,
        )
    words = tuple(w for w, ok in zip(E.vocab.words, nonzero) if ok)
    counts = np.array([freq.get(w, 0) for w in words], dtype=np.int64)
    vocab = Vocabulary(words, counts)
    kept = vectors[nonzero]
    unit = kept / norms[nonzero, None]
    return EmbeddingSpace(vocab, unit, freq, neighbor_min_freq, kept)


def cosine(space: EmbeddingSpace, w1: str, w2: str) -> float:
    return float(np.clip(space.unit(w1) @ space.unit(w2), -1.0, 1.0))


# BLAS rounding depends on batch shape; any true top-k member lies within this
# slack of the BLAS threshold (the error for unit vectors is ~dim * eps).
_POOL_SLACK = 1e-9


@njit(cache=True)
def _fixed_order_dots(U, q, ids):
    # Sequential sum over dimensions: identical inputs always give identical bits.
    out = np.empty(ids.shape[0])
    for t in range(ids.shape[0]):
        acc = 0.0
        for d in range(U.shape[1]):
            acc += U[q, d] * U[ids[t], d]
        out[t] = acc
    return out


def _select(space, sims_row, cand_ids, kk, q):
    """Top ``kk`` candidates by (cosine desc, word asc) as (indices into ``cand_ids``, cosines)."""
    if kk <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    if kk < len(sims_row):
        thr = np.partition(sims_row, len(sims_row) - kk)[len(sims_row) - kk]
        pool = np.flatnonzero(sims_row >= thr - _POOL_SLACK)
    else:
        pool = np.flatnonzero(sims_row > -np.inf)
    exact = _fixed_order_dots(space.unit_matrix, q, cand_ids[pool])
    order = np.lexsort((space._lex_rank[cand_ids[pool]], -exact))[:kk]
    return pool[order], exact[order]


def _search_block(space, query_ids, cand_ids, k):
    sims = space.unit_matrix[query_ids] @ space.unit_matrix[cand_ids].T
    pos_in_cand = np.full(len(space), -1, dtype=np.int64)
    pos_in_cand[cand_ids] = np.arange(len(cand_ids))
    out = []
    for row, q in enumerate(query_ids):
        sims_row = sims[row]
        self_pos = pos_in_cand[q]
        if self_pos >= 0:
            sims_row[self_pos] = -np.inf
        available = len(cand_ids) - (self_pos >= 0)
        kk = min(k, available)
        sel, cos = _select(space, sims_row, cand_ids, kk, q)
        ordered = tuple(
            (space.vocab.words[cand_ids[i]], float(min(c, 1.0))) for i, c in zip(sel, cos)
        )
        out.append(NeighborSet(space.vocab.words[q], k, ordered))
    return out


def neighbor_sets(
    space: EmbeddingSpace,
    words: Sequence[str],
    k: int = 1000,
    block_size: int = 512,
    workers: int = 1,
) -> dict[str, NeighborSet]:
    """Exact top-k neighbor sets for many words at once.

    Queries are processed in blocks of ``block_size`` rows with one matrix
    product per block; with ``workers > 1`` blocks run on a thread pool. The
    result does not depend on either setting.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query_ids = np.array([space.vocab.index(w) for w in words], dtype=np.int64)
    cand_ids = np.flatnonzero(space.candidates)
    n_cand = len(cand_ids)
    if query_ids.size and n_cand - int(space.candidates[query_ids].max()) < k:
        warnings.warn(
            f"k={k} exceeds the {n_cand} neighbor candidates (freq > {space.neighbor_min_freq}); "
            "neighbor sets are clamped",
            stacklevel=2,
        )
    blocks = [query_ids[i:i + block_size] for i in range(0, len(query_ids), block_size)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: _search_block(space, b, cand_ids, k), blocks))
    else:
        results = [_search_block(space, b, cand_ids, k) for b in blocks]
    return {ns.target: ns for part in results for ns in part}


def top_k_neighbors(space: EmbeddingSpace, w: str, k: int = 1000) -> NeighborSet:
    """The ``k`` nearest candidate neighbors of ``w`` by cosine, excluding ``w``.

    Ties in cosine are broken by the lexicographic order of the neighbor words.
    When fewer than ``k`` candidates exist the set is clamped and a warning is
    emitted.
    """
    if w not in space.vocab:
        raise KeyError(f"word {w!r} not in vocabulary")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = neighbor_sets(space, [w], k)[w]
    for item in caught:
        warnings.warn(item.message, item.category, stacklevel=2)
    return result


def save_neighbor_dump(path: str | Path, sets: Mapping[str, NeighborSet] | Iterable[NeighborSet]) -> None:
    """Write ``target<TAB>rank<TAB>neighbor<TAB>cosine`` rows."""
    items = sets.values() if isinstance(sets, Mapping) else sets
    with open_text(path, "w") as fh:
        for ns in items:
            for rank, (word, cos) in enumerate(ns.ordered, 1):
                fh.write(f"{ns.target}\t{rank}\t{word}\t{cos!r}\n")


def load_neighbor_dump(path: str | Path) -> dict[str, NeighborSet]:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            target, rank, word, cos = parts
            rows.setdefault(target, []).append((int(rank), word, float(cos)))
    out = {}
    for target, items in rows.items():
        items.sort()
        if [r for r, _, _ in items] != list(range(1, len(items) + 1)):
            raise ValueError(f"{path}: ranks for {target!r} are not contiguous from 1")
        out[target] = NeighborSet(target, len(items), tuple((w, c) for _, w, c in items))
    return out
