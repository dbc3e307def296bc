"""Ranking stability and quality metrics: intersection@k, Spearman's rho and DCG."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import numpy as np

from .corpus import open_text
from .detect import RankedList

__all__ = [
    "GoldRanking",
    "load_gold",
    "intersection_at_k",
    "spearman",
    "dcg",
    "metric_report",
    "write_metric_reports",
]

Ranking = Union[RankedList, Sequence[str]]


@dataclass(frozen=True)
class GoldRanking:
    """Evaluation words with human change scores (higher = more changed)."""

    entries: tuple[tuple[str, float], ...]
    source_tag: str = ""
    _scores: Mapping[str, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        entries = tuple((str(w), float(s)) for w, s in self.entries)
        scores: dict[str, float] = {}
        for w, s in entries:
            if w in scores:
                raise ValueError(f"duplicate gold word {w!r}")
            if not math.isfinite(s):
                raise ValueError(f"gold score for {w!r} is not finite")
            scores[w] = s
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_scores", scores)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.entries]

    def score(self, word: str) -> float:
        return self._scores[word]


def load_gold(path: str | Path, source_tag: str | None = None) -> GoldRanking:
    """Read a ``word<TAB>score`` file. Blank lines are ignored."""
    entries = []
    seen: set[str] = set()
    with open_text(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise ValueError(f"{path}:{lineno}: expected 'word<TAB>score'")
            word, raw = parts
            try:
                score = float(raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric score {raw!r} for {word!r}") from None
            if word in seen:
                raise ValueError(f"{path}:{lineno}: duplicate gold word {word!r}")
            seen.add(word)
            entries.append((word, score))
    if not entries:
        raise ValueError(f"{path}: gold file is empty")
    return GoldRanking(tuple(entries), source_tag if source_tag is not None else Path(path).name)


def _words(r: Ranking) -> list[str]:
    return r.words if isinstance(r, RankedList) else list(r)


def intersection_at_k(r1: Ranking, r2: Ranking, k: int) -> float:
    """Fraction of words shared by the top ``k`` of two rankings."""
    if k < 1:
        raise ValueError("k must be >= 1")
    w1, w2 = _words(r1), _words(r2)
    if len(w1) < k or len(w2) < k:
        raise ValueError(f"intersection@{k} needs at least {k} ranked words (got {len(w1)} and {len(w2)})")
    return len(set(w1[:k]) & set(w2[:k])) / k


def _fractional_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks of ``values`` ascending, tied values sharing their average rank."""
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _missing(model: RankedList, gold: GoldRanking, metric: str) -> list[str]:
    missing = [w for w in gold.words if w not in model]
    if missing:
        warnings.warn(
            f"{metric}: {len(missing)} gold word(s) absent from the ranking are placed at rank "
            f"{len(model) + 1}: {', '.join(missing[:10])}",
            stacklevel=3,
        )
    return missing


def spearman(model: RankedList, gold: GoldRanking) -> float:
    """Spearman's rho between the model's change scores and the gold scores of the gold words.

    Both sides get fractional ranks, so tied model scores (common with integer
    neighbor-intersection scores) share a rank. Gold words missing from the
    model rank below every ranked word.
    """
    missing = set(_missing(model, gold, "spearman"))
    if len(gold) - len(missing) < 2:
        raise ValueError("spearman needs at least 2 gold words present in the ranking")
    model_vals = np.array(
        [-np.inf if w in missing else float(model.score_of(w)) for w in gold.words]
    )
    gold_vals = np.array([s for _, s in gold.entries])
    a = _fractional_ranks(model_vals)
    b = _fractional_ranks(gold_vals)
    a -= a.mean()
    b -= b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    if denom == 0:
        raise ValueError("spearman is undefined when either side has a single distinct value")
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def dcg(model: RankedList, gold: GoldRanking) -> float:
    """Sum over gold words of ``gold_score / log2(rank + 1)``, ranks 1-based over the full ranking."""
    if len(gold) == 0:
        raise ValueError("dcg needs a nonempty gold ranking")
    _missing(model, gold, "dcg")
    fallback = len(model) + 1
    total = 0.0
    for w, s in gold.entries:
        rank = model.rank_of(w) or fallback
        total += s / math.log2(rank + 1)
    return total


def metric_report(metric: str, value: float, k: int | None = None,
                  provenance: Mapping[str, Any] | None = None) -> dict[str, Any]:
    report: dict[str, Any] = {"metric": metric, "value": value}
    if k is not None:
        report["k"] = k
    report["provenance"] = dict(provenance or {})
    return report


def write_metric_reports(path: str | Path, reports: Sequence[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(list(reports), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
