"""Usage-change detection by nearest-neighbor intersection.

A word's score is the negated size of the overlap between its k nearest
neighbors in the two spaces, so a higher score means fewer shared neighbors and
a more likely change in usage.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from .corpus import build_stopwords, build_vocabulary, open_text
from .space import EmbeddingSpace, neighbor_sets

__all__ = [
    "DetectorConfig",
    "RankedEntry",
    "RankedList",
    "shared_eligible_words",
    "nn_score",
    "rank_usage_change",
    "order_by_score",
]


@dataclass(frozen=True)
class DetectorConfig:
    k: int = 1000
    min_count: int = 200
    drop_quantile: float = 0.2
    stopword_top_n: int = 200
    extra_stopwords: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "extra_stopwords", tuple(self.extra_stopwords))
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 <= self.drop_quantile < 1:
            raise ValueError("drop_quantile must be in [0, 1)")
        if self.stopword_top_n < 0 or self.min_count < 0:
            raise ValueError("stopword_top_n and min_count must be >= 0")

    def as_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["extra_stopwords"] = list(self.extra_stopwords)
        return d


class RankedEntry(NamedTuple):
    word: str
    score: float
    rank: int


@dataclass(frozen=True)
class RankedList:
    """Candidate words ordered from most to least likely changed."""

    entries: tuple[RankedEntry, ...]
    method_tag: str = "nn"
    provenance: Mapping[str, Any] = field(default_factory=dict, compare=False)
    _pos: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple(RankedEntry(*e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        pos = {}
        for i, e in enumerate(entries):
            if e.rank != i + 1:
                raise ValueError("ranks must be contiguous from 1")
            if e.word in pos:
                raise ValueError(f"duplicate word {e.word!r} in ranking")
            if i and e.score > entries[i - 1].score:
                raise ValueError("scores must be non-increasing in rank order")
            pos[e.word] = i
        object.__setattr__(self, "_pos", pos)

    @classmethod
    def from_words(cls, words: Iterable[str], method_tag: str = "nn") -> "RankedList":
        """A list with scores ``n-1, ..., 0``; handy for stability comparisons of plain orderings."""
        words = list(words)
        n = len(words)
        return cls(tuple(RankedEntry(w, n - i - 1, i + 1) for i, w in enumerate(words)), method_tag)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self._pos

    @property
    def words(self) -> list[str]:
        return [e.word for e in self.entries]

    def top(self, k: int) -> list[str]:
        return [e.word for e in self.entries[:k]]

    def rank_of(self, word: str) -> int | None:
        i = self._pos.get(word)
        return None if i is None else i + 1

    def score_of(self, word: str) -> float | None:
        i = self._pos.get(word)
        return None if i is None else self.entries[i].score

    def save(self, path: str | Path, sidecar: bool = True) -> None:
        """Write ``rank<TAB>word<TAB>score`` rows plus a ``<path>.json`` provenance sidecar."""
        path = Path(path)
        with open_text(path, "w") as fh:
            for e in self.entries:
                fh.write(f"{e.rank}\t{e.word}\t{_fmt_score(e.score)}\n")
        if sidecar:
            meta = {"method": self.method_tag, "n_words": len(self), **dict(self.provenance)}
            with open(sidecar_path(path), "w", encoding="utf-8") as fh:
                json.dump(meta, fh, indent=2, sort_keys=True, ensure_ascii=False)
                fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "RankedList":
        path = Path(path)
        entries = []
        with open_text(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ValueError(f"{path}:{lineno}: expected 'rank<TAB>word<TAB>score'")
                rank, word, score = parts
                try:
                    value = int(score) if score.lstrip("-").isdigit() else float(score)
                    entries.append(RankedEntry(word, value, int(rank)))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: malformed rank or score") from None
        method, provenance = "nn", {}
        side = sidecar_path(path)
        if side.exists():
            with open(side, encoding="utf-8") as fh:
                provenance = json.load(fh)
            method = provenance.pop("method", method)
            provenance.pop("n_words", None)
        return cls(tuple(entries), method, provenance)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def _fmt_score(score) -> str:
    if isinstance(score, int):
        return str(score)
    return repr(float(score))


def shared_eligible_words(
    space_a: EmbeddingSpace, space_b: EmbeddingSpace, cfg: DetectorConfig | None = None
) -> frozenset[str]:
    """Words present in both spaces that pass the frequency and stopword filters in both corpora.

    Stopwords are the ``stopword_top_n`` most frequent words of either corpus
    plus ``extra_stopwords``; see :func:`usagechange.corpus.build_vocabulary`
    for the count and quantile cut-offs.
    """
    cfg = cfg or DetectorConfig()
    stop = build_stopwords(space_a.frequencies, space_b.frequencies, cfg.stopword_top_n, cfg.extra_stopwords)
    va = build_vocabulary(space_a.frequencies, stop, cfg.min_count, cfg.drop_quantile)
    vb = build_vocabulary(space_b.frequencies, stop, cfg.min_count, cfg.drop_quantile)
    ok_b = set(vb.eligible())
    shared = frozenset(w for w in va.eligible() if w in ok_b and w in space_a and w in space_b)
    if not shared:
        raise ValueError("no word is eligible for ranking in both corpora")
    return shared


def nn_score(space_a: EmbeddingSpace, space_b: EmbeddingSpace, w: str, k: int = 1000) -> int:
    """Negated size of the intersection of ``w``'s top-k neighbors in the two spaces."""
    for space in (space_a, space_b):
        if w not in space:
            raise KeyError(f"word {w!r} not in vocabulary")
    na = neighbor_sets(space_a, [w], k)[w]
    nb = neighbor_sets(space_b, [w], k)[w]
    return -len(na.as_set & nb.as_set)


def order_by_score(
    scores: Mapping[str, float], space_a: EmbeddingSpace, space_b: EmbeddingSpace
) -> list[tuple[str, float]]:
    """Sort by score descending, then by the smaller of the two corpus counts descending, then by word."""
    def key(item):
        w, s = item
        return (-s, -min(space_a.freq(w), space_b.freq(w)), w)

    return sorted(scores.items(), key=key)


def _as_ranked(items: Sequence[tuple[str, float]], tag: str, provenance) -> RankedList:
    return RankedList(tuple(RankedEntry(w, s, i) for i, (w, s) in enumerate(items, 1)), tag, provenance)


def rank_usage_change(
    space_a: EmbeddingSpace,
    space_b: EmbeddingSpace,
    cfg: DetectorConfig | None = None,
    workers: int = 1,
) -> RankedList:
    """Rank every shared eligible word by its nearest-neighbor intersection score.

    Neighbor sets may contain words that are not themselves eligible for
    ranking; only each space's neighbor frequency filter applies to them.
    """
    cfg = cfg or DetectorConfig()
    words = sorted(shared_eligible_words(space_a, space_b, cfg))
    na = neighbor_sets(space_a, words, cfg.k, workers=workers)
    nb = neighbor_sets(space_b, words, cfg.k, workers=workers)
    scores = {w: -len(na[w].as_set & nb[w].as_set) for w in words}
    provenance = {"config": cfg.as_dict(), "n_shared": len(words)}
    return _as_ranked(order_by_score(scores, space_a, space_b), "nn", provenance)
