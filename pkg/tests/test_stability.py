from __future__ import annotations

import pytest

from usagechange.detect import DetectorConfig, RankedList
from usagechange.stability import clamp_ks, mean_intersection, stability_report

from conftest import random_space


def test_clamp_ks():
    assert clamp_ks([10, 20, 50, 100], 30) == [10, 20, 30]
    assert clamp_ks([5, 5, 1], 100) == [5, 1]


def test_mean_intersection_over_pairs():
    r1 = RankedList.from_words("abcd")
    r2 = RankedList.from_words("abdc")
    r3 = RankedList.from_words("dcba")
    assert mean_intersection([r1, r2], 2) == 1.0
    assert mean_intersection([r1, r2, r3], 2) == pytest.approx((1.0 + 0.0 + 0.0) / 3)
    assert mean_intersection([r1, r2], 100) == 1.0
    with pytest.raises(ValueError):
        mean_intersection([r1], 2)


def test_identical_seeds_are_perfectly_stable():
    a, b = random_space(80, 6, 0), random_space(80, 6, 1)
    cfg = DetectorConfig(k=10, min_count=1, drop_quantile=0, stopword_top_n=0)
    rep = stability_report([(a, b), (a, b)], cfg, ks=(10, 20, 500), min_counts=(1, 2), nn_ks=(5, 10), sweep_at=10)
    assert rep["curve"]["k"] == [10, 20, 80]
    assert rep["curve"]["nn"] == [1.0, 1.0, 1.0] and rep["curve"]["aligncos"] == [1.0, 1.0, 1.0]
    assert rep["min_count_sweep"]["nn"] == [1.0, 1.0]
    assert rep["neighbor_k_sweep"] == {"at_k": 10, "k": [5, 10], "nn": [1.0, 1.0]}


def test_different_spaces_are_less_stable():
    a, b, c, d = (random_space(80, 6, s) for s in range(4))
    cfg = DetectorConfig(k=10, min_count=1, drop_quantile=0, stopword_top_n=0)
    rep = stability_report([(a, b), (c, d)], cfg, ks=(10, 80))
    assert rep["curve"]["nn"][-1] == 1.0
    assert rep["curve"]["nn"][0] < 1.0
