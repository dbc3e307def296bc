"""Ranking stability across training seeds: intersection@k curves and parameter sweeps."""
from __future__ import annotations

from dataclasses import replace
from itertools import combinations
from typing import Sequence

import numpy as np

from .align import aligncos_rank
from .detect import DetectorConfig, RankedList, rank_usage_change
from .metrics import intersection_at_k
from .space import EmbeddingSpace

__all__ = ["STABILITY_KS", "clamp_ks", "mean_intersection", "stability_report"]

STABILITY_KS = (10, 20, 50, 100, 200, 500, 1000)

SpacePair = tuple[EmbeddingSpace, EmbeddingSpace]


def clamp_ks(ks: Sequence[int], n: int) -> list[int]:
    """``ks`` clamped to ``n`` with duplicates removed, order kept."""
    out: list[int] = []
    for k in ks:
        k = min(int(k), n)
        if k >= 1 and k not in out:
            out.append(k)
    return out


def mean_intersection(rankings: Sequence[RankedList], k: int) -> float:
    """Mean intersection@k over all pairs of rankings (``k`` clamped to the shortest list)."""
    if len(rankings) < 2:
        raise ValueError("stability needs rankings from at least two seeds")
    k = min(k, min(len(r) for r in rankings))
    return float(np.mean([intersection_at_k(a, b, k) for a, b in combinations(rankings, 2)]))


def _rank_all(pairs: Sequence[SpacePair], cfg: DetectorConfig, workers: int):
    nn = [rank_usage_change(a, b, cfg, workers) for a, b in pairs]
    al = [aligncos_rank(a, b, cfg) for a, b in pairs]
    return nn, al


def stability_report(
    pairs: Sequence[SpacePair],
    cfg: DetectorConfig | None = None,
    ks: Sequence[int] = STABILITY_KS,
    min_counts: Sequence[int] = (),
    nn_ks: Sequence[int] = (),
    sweep_at: int = 100,
    workers: int = 1,
) -> dict:
    """Compare rankings built from spaces trained with different seeds.

    ``pairs[i]`` holds the (corpus A, corpus B) spaces of seed ``i``. Returns
    the intersection@k curve of both methods, plus intersection@``sweep_at``
    as the frequency cut-off varies (both methods) and as the neighbor count
    varies (nearest-neighbor method only). With more than two seeds every value
    is the mean over seed pairs.
    """
    cfg = cfg or DetectorConfig()
    nn, al = _rank_all(pairs, cfg, workers)
    n = min(len(r) for r in nn + al)
    curve_ks = clamp_ks(ks, n)
    out: dict = {
        "n_seeds": len(pairs),
        "n_ranked": n,
        "curve": {
            "k": curve_ks,
            "nn": [mean_intersection(nn, k) for k in curve_ks],
            "aligncos": [mean_intersection(al, k) for k in curve_ks],
        },
    }
    if min_counts:
        rows = {"min_count": [], "n_ranked": [], "nn": [], "aligncos": []}
        for mc in min_counts:
            sweep_nn, sweep_al = _rank_all(pairs, replace(cfg, min_count=int(mc)), workers)
            rows["min_count"].append(int(mc))
            rows["n_ranked"].append(min(len(r) for r in sweep_nn))
            rows["nn"].append(mean_intersection(sweep_nn, sweep_at))
            rows["aligncos"].append(mean_intersection(sweep_al, sweep_at))
        out["min_count_sweep"] = {"at_k": sweep_at, **rows}
    if nn_ks:
        vals = []
        for k in nn_ks:
            c = replace(cfg, k=int(k))
            vals.append(mean_intersection([rank_usage_change(a, b, c, workers) for a, b in pairs], sweep_at))
        out["neighbor_k_sweep"] = {"at_k": sweep_at, "k": [int(k) for k in nn_ks], "nn": vals}
    return out
