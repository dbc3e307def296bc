"""Skip-gram negative-sampling (SGNS) word embeddings and word2vec file formats.

Training follows the reference word2vec recipe: a dynamic window sampled
uniformly in ``[1, window]``, frequent-word subsampling, negatives drawn from
the unigram distribution raised to 3/4, and a learning rate decaying linearly
from ``initial_lr`` to ``initial_lr / 1e4`` over all epochs.

All randomness inside the training loop comes from word2vec's 48-bit linear
congruential generator seeded from ``TrainerConfig.seed``, so a deterministic
(single worker) run is bit-reproducible.
"""
from __future__ import annotations

import logging
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numba
import numpy as np
from numba import njit, prange

from .corpus import FrequencyTable, Vocabulary, open_text

__all__ = [
    "TrainerConfig",
    "EmbeddingMatrix",
    "train_embeddings",
    "sgns_loss_and_grad",
    "sgns_pair_loss",
    "save_embeddings",
    "load_embeddings",
]

logger = logging.getLogger(__name__)

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "workqueue"

MAX_SENTENCE_LEN = 10000
CHUNK_TOKENS = 1 << 20
_TABLE_DOMAIN = 2**31 - 1
_MIN_LR_RATIO = 1e-4


@dataclass(frozen=True)
class TrainerConfig:
    dim: int = 300
    window: int = 4
    min_count: int = 20
    negatives: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    subsample_threshold: float = 1e-3
    seed: int = 1
    deterministic: bool = True
    workers: int = 1

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be > 0")
        if self.window <= 0:
            raise ValueError("window must be > 0")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be > 0")
        if self.subsample_threshold < 0:
            raise ValueError("subsample_threshold must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Input vectors (one row per vocabulary word) and, after training, context vectors."""

    vocab: Vocabulary
    vectors: np.ndarray
    context_vectors: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        if vectors.ndim != 2 or vectors.shape[0] != len(self.vocab):
            raise ValueError(
                f"vectors shape {vectors.shape} does not match vocabulary size {len(self.vocab)}"
            )
        if not np.isfinite(vectors).all():
            raise ValueError("embedding vectors contain NaN or Inf")
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __getitem__(self, word: str) -> np.ndarray:
        return self.vectors[self.vocab.index(word)]


# --- objective -----------------------------------------------------------------

def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sgns_loss_and_grad(center, pos, negs):
    """Negative SGNS log-likelihood of one (center, context) pair and its gradients.

    ``loss = -[log s(v.c+) + sum_i log s(-v.c-_i)]`` with ``s`` the logistic
    function. Returns ``(loss, (d_center, d_pos, d_negs))`` where ``d_negs`` has
    the shape of ``negs``.
    """
    v = np.asarray(center, dtype=np.float64)
    cp = np.asarray(pos, dtype=np.float64)
    cn = np.asarray(negs, dtype=np.float64).reshape(-1, v.shape[-1]) if len(negs) else np.zeros((0, v.shape[-1]))
    if v.ndim != 1 or cp.shape != v.shape or (len(negs) and np.asarray(negs).shape[-1] != v.shape[0]):
        raise ValueError("center, positive and negative vectors must share one dimension")
    fp = v @ cp
    fn = cn @ v
    loss = -(_log_sigmoid(fp) + _log_sigmoid(-fn).sum())
    gp = _sigmoid(fp) - 1.0
    gn = _sigmoid(fn)
    d_center = gp * cp + gn @ cn
    d_pos = gp * v
    d_negs = gn[:, None] * v[None, :]
    return float(loss), (d_center, d_pos, d_negs)


def sgns_pair_loss(vectors, context_vectors, pairs, negatives) -> float:
    """Mean SGNS loss over index pairs ``(center, context)`` with fixed negative ids."""
    v = np.asarray(vectors, dtype=np.float64)[pairs[:, 0]]
    cp = np.asarray(context_vectors, dtype=np.float64)[pairs[:, 1]]
    cn = np.asarray(context_vectors, dtype=np.float64)[negatives]
    fp = np.einsum("ij,ij->i", v, cp)
    fn = np.einsum("ikj,ij->ik", cn, v)
    return float(-(_log_sigmoid(fp) + _log_sigmoid(-fn).sum(axis=1)).mean())


# --- compiled training loop ----------------------------------------------------

@njit(inline="always")
def _lcg(state):
    return (state * np.uint64(25214903917) + np.uint64(11)) & np.uint64(0xFFFFFFFFFFFF)


@njit(inline="always")
def _bits32(state):
    return (state >> np.uint64(16)) & np.uint64(0xFFFFFFFF)


@njit(fastmath=True, cache=True)
def _pair_update(syn0, syn1, w, c, negs, n_neg, lr, neu):
    """One SGD step on the pair (w, c) with negatives ``negs[:n_neg]``."""
    dim = syn0.shape[1]
    for d in range(dim):
        neu[d] = 0.0
    for t in range(n_neg + 1):
        if t == 0:
            tgt = c
            label = 1.0
        else:
            tgt = negs[t - 1]
            label = 0.0
        f = 0.0
        for d in range(dim):
            f += syn0[w, d] * syn1[tgt, d]
        g = (label - 1.0 / (1.0 + math.exp(-f))) * lr
        for d in range(dim):
            neu[d] += g * syn1[tgt, d]
            syn1[tgt, d] += g * syn0[w, d]
    for d in range(dim):
        syn0[w, d] += neu[d]


@njit(fastmath=True, cache=True)
def _train_range(ids, starts, s_lo, s_hi, syn0, syn1, cum, keep, window, negatives,
                 lr_start, lr_end, done0, total, stride, state):
    """Train on sentences ``[s_lo, s_hi)``; returns the advanced RNG state and word count."""
    dim = syn0.shape[1]
    neu = np.zeros(dim, dtype=syn0.dtype)
    buf = np.empty(ids.shape[0] if ids.shape[0] < 10000 else 10000, dtype=np.int32)
    negs = np.empty(negatives, dtype=np.int64)
    table_max = np.uint64(cum[-1])
    done = 0
    for s in range(s_lo, s_hi):
        n = 0
        for p in range(starts[s], starts[s + 1]):
            w = ids[p]
            state = _lcg(state)
            if keep[w] < _bits32(state) / 4294967296.0:
                continue
            buf[n] = w
            n += 1
        done += starts[s + 1] - starts[s]
        progress = (done0 + done * stride) / total
        if progress > 1.0:
            progress = 1.0
        lr = lr_start - (lr_start - lr_end) * progress
        for i in range(n):
            w = buf[i]
            state = _lcg(state)
            b = np.int64(_bits32(state) % np.uint64(window))
            lo = i - window + b
            if lo < 0:
                lo = 0
            hi = i + window + 1 - b
            if hi > n:
                hi = n
            for j in range(lo, hi):
                if j == i:
                    continue
                c = buf[j]
                n_neg = 0
                for _ in range(negatives):
                    state = _lcg(state)
                    r = _bits32(state) % table_max
                    tgt = np.searchsorted(cum, r, side="right")
                    if tgt == c:
                        continue
                    negs[n_neg] = tgt
                    n_neg += 1
                _pair_update(syn0, syn1, w, c, negs, n_neg, lr, neu)
    return state, done


@njit(parallel=True, cache=True)
def _train_parallel(ids, starts, syn0, syn1, cum, keep, window, negatives,
                    lr_start, lr_end, done0, total, states):
    # Hogwild: workers update the shared matrices without synchronization.
    n_parts = states.shape[0]
    n_sent = starts.shape[0] - 1
    dones = np.zeros(n_parts, dtype=np.int64)
    for k in prange(n_parts):
        lo = n_sent * k // n_parts
        hi = n_sent * (k + 1) // n_parts
        states[k], dones[k] = _train_range(ids, starts, lo, hi, syn0, syn1, cum, keep, window,
                                           negatives, lr_start, lr_end, done0, total, n_parts,
                                           states[k])
    return dones.sum()


# --- driver --------------------------------------------------------------------

def _chunks(sentences: Iterable[Sequence[str]], ids: dict[str, int]) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Encode sentences to id arrays in chunks, dropping out-of-vocabulary tokens."""
    flat: list[int] = []
    starts = [0]
    for sent in sentences:
        encoded = [ids[t] for t in sent if t in ids]
        for i in range(0, len(encoded), MAX_SENTENCE_LEN):
            piece = encoded[i:i + MAX_SENTENCE_LEN]
            if len(piece) > 1:
                flat.extend(piece)
                starts.append(len(flat))
        if len(flat) >= CHUNK_TOKENS:
            yield np.array(flat, dtype=np.int32), np.array(starts, dtype=np.int64)
            flat, starts = [], [0]
    if len(starts) > 1:
        yield np.array(flat, dtype=np.int32), np.array(starts, dtype=np.int64)


def _negative_table(counts: np.ndarray) -> np.ndarray:
    weights = counts.astype(np.float64) ** 0.75
    cum = np.cumsum(weights / weights.sum() * _TABLE_DOMAIN)
    cum = np.round(cum).astype(np.int64)
    cum[-1] = _TABLE_DOMAIN
    return cum


def _keep_probabilities(counts: np.ndarray, threshold: float) -> np.ndarray:
    if threshold <= 0:
        return np.ones(len(counts), dtype=np.float64)
    t = threshold * counts.sum()
    c = counts.astype(np.float64)
    return np.minimum(1.0, (np.sqrt(c / t) + 1.0) * t / c)


def train_embeddings(
    sentences: Iterable[Sequence[str]],
    cfg: TrainerConfig | None = None,
    freq: FrequencyTable | None = None,
    cache_limit: int = 50_000_000,
) -> EmbeddingMatrix:
    """Train SGNS embeddings on a re-iterable collection of token lists.

    ``sentences`` is iterated once for counting (skipped when ``freq`` is given)
    and once per epoch, unless the encoded corpus fits within ``cache_limit``
    tokens, in which case it is encoded once and kept in memory. Windows never
    cross sentence boundaries.
    """
    cfg = cfg or TrainerConfig()
    if freq is None:
        counter: Counter = Counter()
        for sent in sentences:
            counter.update(sent)
        freq = FrequencyTable(counter)
    kept = {w: c for w, c in freq.counts.items() if c >= cfg.min_count}
    if not kept:
        raise ValueError(f"no word occurs at least min_count={cfg.min_count} times")
    vocab = Vocabulary.from_counts(kept)
    counts = vocab.freq
    n_vocab_tokens = int(counts.sum())

    rng = np.random.default_rng(cfg.seed)
    syn0 = ((rng.random((len(vocab), cfg.dim)) - 0.5) / cfg.dim).astype(np.float32)
    syn1 = np.zeros((len(vocab), cfg.dim), dtype=np.float32)
    cum = _negative_table(counts)
    keep = _keep_probabilities(counts, cfg.subsample_threshold)
    lr_end = cfg.initial_lr * _MIN_LR_RATIO
    total = float(cfg.epochs * n_vocab_tokens)

    cached = None
    if n_vocab_tokens <= cache_limit:
        cached = list(_chunks(sentences, vocab.ids))

    workers = 1 if cfg.deterministic else cfg.workers
    state = np.uint64(cfg.seed & 0xFFFFFFFFFFFF)
    states = np.array([(cfg.seed * 7919 + k) & 0xFFFFFFFFFFFF for k in range(workers)], dtype=np.uint64)
    done = 0
    for epoch in range(cfg.epochs):
        chunks = cached if cached is not None else _chunks(sentences, vocab.ids)
        for ids, starts in chunks:
            if workers == 1:
                state, n = _train_range(ids, starts, 0, len(starts) - 1, syn0, syn1, cum, keep,
                                        cfg.window, cfg.negatives, cfg.initial_lr, lr_end,
                                        done, total, 1, state)
            else:
                n = _train_parallel(ids, starts, syn0, syn1, cum, keep, cfg.window, cfg.negatives,
                                    cfg.initial_lr, lr_end, done, total, states)
            done += int(n)
        logger.info("epoch %d/%d done", epoch + 1, cfg.epochs)
    return EmbeddingMatrix(vocab, syn0, syn1)


# --- word2vec formats ----------------------------------------------------------

def save_embeddings(E: EmbeddingMatrix, path: str | Path) -> None:
    """Write the input vectors in word2vec text format (9 significant digits)."""
    with open_text(path, "w") as fh:
        fh.write(f"{len(E.vocab)} {E.dim}\n")
        for word, row in zip(E.vocab.words, E.vectors):
            fh.write(word)
            fh.write(" ")
            fh.write(" ".join(f"{x:.9g}" for x in row.tolist()))
            fh.write("\n")


def _parse_header(line: str, path) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise ValueError(f"{path}: malformed header {line.strip()!r}, expected '<vocab_size> <dim>'")
    try:
        n, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"{path}: malformed header {line.strip()!r}") from None
    if n < 0 or dim <= 0:
        raise ValueError(f"{path}: malformed header {line.strip()!r}")
    return n, dim


def _finish(words: list[str], rows, n: int, dim: int, path) -> EmbeddingMatrix:
    if len(words) != n:
        raise ValueError(f"{path}: header declares {n} words but file has {len(words)}")
    seen: set[str] = set()
    for w in words:
        if w in seen:
            raise ValueError(f"{path}: duplicate word {w!r}")
        seen.add(w)
    vectors = np.array(rows, dtype=np.float32).reshape(n, dim)
    return EmbeddingMatrix(Vocabulary(tuple(words), np.zeros(n, dtype=np.int64)), vectors)


def load_embeddings(path: str | Path, binary: bool | None = None) -> EmbeddingMatrix:
    """Read word2vec text (or, with ``binary=True`` / a ``.bin`` suffix, binary) vectors."""
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    if binary:
        return _load_binary(path)
    words: list[str] = []
    rows: list[list[float]] = []
    with open_text(path) as fh:
        header = fh.readline()
        n, dim = _parse_header(header, path)
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n").rstrip(" ")
            if not line:
                continue
            parts = line.rsplit(" ", dim)
            if len(parts) != dim + 1 or not parts[0]:
                raise ValueError(f"{path}:{lineno}: expected a word and {dim} values")
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric vector value") from None
            words.append(parts[0])
    return _finish(words, rows, n, dim, path)


def _load_binary(path: Path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        n, dim = _parse_header(fh.readline().decode("utf-8"), path)
        words: list[str] = []
        rows = []
        width = 4 * dim
        for _ in range(n):
            raw = bytearray()
            while True:
                ch = fh.read(1)
                if not ch:
                    raise ValueError(f"{path}: header declares {n} words but file has {len(words)}")
                if ch == b" ":
                    break
                if ch != b"\n":
                    raw += ch
            block = fh.read(width)
            if len(block) != width:
                raise ValueError(f"{path}: truncated vector for word {raw.decode('utf-8', 'replace')!r}")
            words.append(raw.decode("utf-8"))
            rows.append(np.frombuffer(block, dtype="<f4"))
        if fh.read(1).strip():
            raise ValueError(f"{path}: more entries than the header's {n}")
    return _finish(words, rows, n, dim, path)
