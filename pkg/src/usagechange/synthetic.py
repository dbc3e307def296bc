"""Synthetic corpus pairs with planted usage changes, for benchmarks and fixtures.

Each document is drawn from one topic and one of its subtopics. A token is a
background (function) word with probability ``background_rate``; otherwise it
comes from the document's subtopic with probability ``subtopic_rate`` and from
the whole topic otherwise, with Zipf-like frequencies inside each topic.
Polysemous words also occur in a second topic, with the same mixture in both
corpora. A planted word belongs to one topic in corpus A and to a different
topic in corpus B; every other word keeps the same contexts in both corpora.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .corpus import write_token_file

__all__ = ["PlantedConfig", "PlantedPair", "generate_planted_pair", "write_planted_pair"]


@dataclass(frozen=True)
class PlantedConfig:
    n_words: int = 2000
    n_topics: int = 20
    n_background: int = 100
    n_planted: int = 5
    tokens_per_corpus: int = 1_000_000
    doc_len: int = 20
    background_rate: float = 0.25
    topic_zipf: float = 0.7
    background_zipf: float = 1.0
    n_subtopics: int = 4
    subtopic_rate: float = 0.5
    n_polysemous: int = 100
    polysemy_share: tuple[float, float] = (0.1, 0.5)
    seed: int = 0

    def __post_init__(self):
        n_topic_words = self.n_words - self.n_background
        if self.n_topics < 2 or n_topic_words < self.n_topics:
            raise ValueError("need at least 2 topics and one word per topic")
        if self.n_background < 1:
            raise ValueError("need at least one background word")
        if not 0 <= self.n_planted <= self.n_topics:
            raise ValueError("n_planted must be between 0 and n_topics")
        if not 0 <= self.background_rate < 1:
            raise ValueError("background_rate must be in [0, 1)")
        if self.n_subtopics < 1 or not 0 <= self.subtopic_rate <= 1:
            raise ValueError("need n_subtopics >= 1 and subtopic_rate in [0, 1]")
        lo, hi = self.polysemy_share
        if not 0 < lo <= hi < 1:
            raise ValueError("polysemy_share must satisfy 0 < low <= high < 1")
        if not 0 <= self.n_polysemous <= n_topic_words - self.n_planted:
            raise ValueError("too many polysemous words")
        object.__setattr__(self, "polysemy_share", (float(lo), float(hi)))


@dataclass(frozen=True)
class PlantedPair:
    docs_a: list[list[str]]
    docs_b: list[list[str]]
    planted: tuple[str, ...]
    topics: dict[str, int]
    moved_to: dict[str, int]
    polysemous: tuple[str, ...]
    config: PlantedConfig

    def metadata(self) -> dict[str, Any]:
        return {
            "config": asdict(self.config),
            "planted": list(self.planted),
            "moved_to": dict(self.moved_to),
        }


def _zipf(n: int, s: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -s
    return w / w.sum()


def _word_names(n: int, rng: np.random.Generator) -> list[str]:
    """Distinct pronounceable pseudo-words, so name order carries no structure."""
    consonants = "bdfgklmnprstvz"
    vowels = "aeiou"
    names: set[str] = set()
    out = []
    while len(out) < n:
        syllables = rng.integers(2, 4)
        name = "".join(consonants[rng.integers(len(consonants))] + vowels[rng.integers(len(vowels))]
                       for _ in range(syllables))
        if name not in names:
            names.add(name)
            out.append(name)
    return out


def _sample_corpus(rng, n_docs, doc_len, bg_words, bg_p, topics, subtopic_rate, bg_rate):
    """``topics`` holds per topic ``(words, weights, subtopic_of_word, n_subtopics)``."""
    doc_topics = rng.integers(len(topics), size=n_docs)
    is_bg = rng.random((n_docs, doc_len)) < bg_rate
    in_sub = rng.random((n_docs, doc_len)) < subtopic_rate
    u = rng.random((n_docs, doc_len))
    bg_idx = np.searchsorted(np.cumsum(bg_p), u, side="right").clip(max=len(bg_words) - 1)
    tables = []
    for words, weights, sub, n_sub in topics:
        full = (np.arange(len(words)), np.cumsum(weights / weights.sum()))
        subs = []
        for s in range(n_sub):
            idx = np.flatnonzero(sub == s)
            subs.append((idx, np.cumsum(weights[idx] / weights[idx].sum())))
        tables.append((words, full, subs))
    doc_subs = rng.random(n_docs)
    docs = []
    for d in range(n_docs):
        words, full, subs = tables[doc_topics[d]]
        idx_s, cdf_s = subs[min(int(doc_subs[d] * len(subs)), len(subs) - 1)]
        pick_full = full[0][np.searchsorted(full[1], u[d], side="right").clip(max=len(full[0]) - 1)]
        pick_sub = idx_s[np.searchsorted(cdf_s, u[d], side="right").clip(max=len(idx_s) - 1)]
        pick = np.where(in_sub[d], pick_sub, pick_full)
        docs.append([bg_words[bg_idx[d, i]] if is_bg[d, i] else words[pick[i]] for i in range(doc_len)])
    return docs


def _topic_tables(members):
    out = []
    for entries in members:
        words = [w for w, _, _ in entries]
        weights = np.array([x for _, x, _ in entries])
        sub = np.array([s for _, _, s in entries])
        out.append((words, weights, sub, int(sub.max()) + 1))
    return out


def generate_planted_pair(cfg: PlantedConfig | None = None) -> PlantedPair:
    """Two corpora of ``tokens_per_corpus`` tokens differing only in the planted words' topics."""
    cfg = cfg or PlantedConfig()
    rng = np.random.default_rng(cfg.seed)
    names = _word_names(cfg.n_words, rng)
    bg_words = names[: cfg.n_background]
    topic_pool = names[cfg.n_background:]
    per_topic = np.array_split(np.arange(len(topic_pool)), cfg.n_topics)
    home: dict[str, int] = {}
    # members[t]: (word, weight, subtopic) triples; a word's weight is its share within the topic.
    members: list[list[tuple[str, float, int]]] = []
    for t, idx in enumerate(per_topic):
        weights = _zipf(len(idx), cfg.topic_zipf)
        subs = rng.permutation(np.arange(len(idx)) % cfg.n_subtopics)
        members.append([(topic_pool[i], float(x), int(s)) for i, x, s in zip(idx, weights, subs)])
        home.update((topic_pool[i], t) for i in idx)

    # Polysemous words: a second sense in another topic, with the same mixture in both corpora.
    candidates = rng.permutation(len(topic_pool))
    polysemous = [topic_pool[i] for i in candidates[: cfg.n_polysemous]]
    for w in polysemous:
        t = home[w]
        weight = next(x for v, x, _ in members[t] if v == w)
        other = int((t + 1 + rng.integers(cfg.n_topics - 1)) % cfg.n_topics)
        share = rng.uniform(*cfg.polysemy_share)
        members[other].append((w, weight * share / (1.0 - share), int(rng.integers(cfg.n_subtopics))))

    # Planted words: mid-frequency monosemous words of distinct topics, each moved to another topic.
    planted, moved_to = [], {}
    poly = set(polysemous)
    for t in rng.permutation(cfg.n_topics)[: cfg.n_planted]:
        size = len(per_topic[t])
        lo, hi = size // 5, max(size // 5 + 1, size // 2)
        options = [w for w, _, _ in members[t][lo:hi] if w not in poly]
        word = options[int(rng.integers(len(options)))]
        planted.append(word)
        moved_to[word] = int((t + 1 + rng.integers(cfg.n_topics - 1)) % cfg.n_topics)

    members_b = [list(m) for m in members]
    for word, dest in moved_to.items():
        src = home[word]
        i = next(j for j, (v, _, _) in enumerate(members_b[src]) if v == word)
        _, weight, _ = members_b[src].pop(i)
        members_b[dest].append((word, weight, int(rng.integers(cfg.n_subtopics))))

    n_docs = cfg.tokens_per_corpus // cfg.doc_len
    bg_p = _zipf(cfg.n_background, cfg.background_zipf)
    rng_a, rng_b = (np.random.default_rng(s) for s in rng.integers(2**63, size=2))
    args = (n_docs, cfg.doc_len, bg_words, bg_p)
    docs_a = _sample_corpus(rng_a, *args, _topic_tables(members), cfg.subtopic_rate, cfg.background_rate)
    docs_b = _sample_corpus(rng_b, *args, _topic_tables(members_b), cfg.subtopic_rate, cfg.background_rate)
    return PlantedPair(docs_a, docs_b, tuple(planted), home, moved_to, tuple(sorted(poly)), cfg)


def write_planted_pair(directory: str | Path, cfg: PlantedConfig | None = None) -> PlantedPair:
    """Write ``corpus_a.txt``, ``corpus_b.txt`` and ``planted.txt`` into ``directory``."""
    pair = generate_planted_pair(cfg)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_token_file(directory / "corpus_a.txt", pair.docs_a)
    write_token_file(directory / "corpus_b.txt", pair.docs_b)
    (directory / "planted.txt").write_text("\n".join(pair.planted) + "\n", encoding="utf-8")
    return pair
