"""Corpus preprocessing: normalization, tokenization, frequency tables and vocabularies.

Input corpora are UTF-8 text with one document per line. Files ending in
``.gz`` are read and written through :mod:`gzip` transparently.
"""
from __future__ import annotations

import gzip
import hashlib
import io
import itertools
import math
import unicodedata
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import regex

__all__ = [
    "NormalizerConfig",
    "FrequencyTable",
    "Vocabulary",
    "normalize_and_tokenize",
    "count_frequencies",
    "count_file_frequencies",
    "build_stopwords",
    "build_vocabulary",
    "open_text",
    "iter_documents",
    "tokenize_file",
    "TokenFile",
    "flatten",
    "write_token_file",
    "load_wordlist",
    "save_wordlist",
]

STRIP_PATTERNS = ("url", "mention", "hashtag", "retweet")

_URL = regex.compile(r"(?:https?://|www\.)\S*", regex.IGNORECASE)
_MENTION = regex.compile(r"@\w")
_HASHTAG = regex.compile(r"#\w")
_RETWEET = regex.compile(r"rt:?", regex.IGNORECASE)
_NUMBER = regex.compile(r"[-+]?\d+(?:[.,:/]\d+)*")


@dataclass(frozen=True)
class NormalizerConfig:
    """Rules for turning a raw line into tokens.

    ``split_punct`` separates tokens at punctuation and symbols that are not in
    ``allowed_punct`` and splits allowed punctuation off token edges, which is
    the part of a real tokenizer's job that the whitespace rules need.
    """

    lowercase: bool = True
    strip_patterns: tuple[str, ...] = STRIP_PATTERNS
    number_token: str = "<num>"
    allowed_scripts: frozenset[str] = frozenset({"Latin"})
    allowed_punct: frozenset[str] = frozenset({"-", "'", "."})
    keep_emoji: bool = True
    split_punct: bool = True

    def __post_init__(self):
        object.__setattr__(self, "strip_patterns", tuple(self.strip_patterns))
        object.__setattr__(self, "allowed_scripts", frozenset(self.allowed_scripts))
        object.__setattr__(self, "allowed_punct", frozenset(self.allowed_punct))
        if not self.number_token or any(ch.isspace() for ch in self.number_token):
            raise ValueError("number_token must be a nonempty string without whitespace")
        unknown = set(self.strip_patterns) - set(STRIP_PATTERNS)
        if unknown:
            raise ValueError(f"unknown strip pattern(s): {sorted(unknown)}")
        for ch in self.allowed_punct:
            if len(ch) != 1 or not unicodedata.category(ch).startswith("P"):
                raise ValueError(f"allowed_punct entry {ch!r} is not a punctuation character")
        for script in self.allowed_scripts:
            try:
                regex.compile(rf"\p{{Script={script}}}")
            except regex.error as exc:
                raise ValueError(f"unknown Unicode script {script!r}") from exc


@dataclass(frozen=True)
class _Rules:
    keep: regex.Pattern
    separators: regex.Pattern
    edges: regex.Pattern | None


@lru_cache(maxsize=32)
def _compile(cfg: NormalizerConfig) -> _Rules:
    punct = "".join(regex.escape(ch) for ch in sorted(cfg.allowed_punct))
    keepers = [rf"\p{{Script={s}}}" for s in sorted(cfg.allowed_scripts)]
    if punct:
        keepers.append(f"[{punct}]")
    if cfg.keep_emoji:
        keepers.append(r"\p{Extended_Pictographic}")
    keep = regex.compile("|".join(keepers) if keepers else r"(?!)")
    # Emoji and their skin-tone modifiers are symbols but must not split tokens.
    separators = regex.compile(
        rf"(?V1)[[\p{{P}}\p{{S}}]--[{punct}\p{{Extended_Pictographic}}\p{{Emoji_Modifier}}]]+"
    )
    edges = regex.compile(rf"^([{punct}]*)(.*?)([{punct}]*)$", regex.DOTALL) if punct else None
    return _Rules(keep, separators, edges)


def _stripped(token: str, patterns: Sequence[str]) -> bool:
    for name in patterns:
        if name == "url" and _URL.match(token):
            return True
        if name == "mention" and _MENTION.match(token):
            return True
        if name == "hashtag" and _HASHTAG.match(token):
            return True
        if name == "retweet" and _RETWEET.fullmatch(token):
            return True
    return False


def normalize_and_tokenize(line: str, cfg: NormalizerConfig | None = None) -> list[str]:
    """Lowercase, strip URLs/mentions/hashtags/retweet markers, replace numbers, filter.

    A token survives only if it contains a character of an allowed script, an
    allowed punctuation mark or (with ``keep_emoji``) an emoji. The number token
    always survives.

    >>> normalize_and_tokenize("Check http://t.co/x #cool @you 123")
    ['check', '<num>']
    """
    cfg = cfg or NormalizerConfig()
    rules = _compile(cfg)
    if cfg.lowercase:
        line = line.lower()
    out: list[str] = []
    for raw in line.split():
        if raw == cfg.number_token:
            out.append(raw)
            continue
        if _stripped(raw, cfg.strip_patterns):
            continue
        pieces = rules.separators.sub(" ", raw).split() if cfg.split_punct else [raw]
        for piece in pieces:
            if cfg.split_punct and rules.edges is not None:
                parts = [p for p in rules.edges.match(piece).groups() if p]
            else:
                parts = [piece]
            for part in parts:
                # Splitting can expose a strippable token, e.g. ".rt" -> ".", "rt".
                if _stripped(part, cfg.strip_patterns):
                    continue
                if _NUMBER.fullmatch(part):
                    out.append(cfg.number_token)
                elif part == cfg.number_token or rules.keep.search(part):
                    out.append(part)
    return out


@dataclass(frozen=True)
class FrequencyTable:
    """Raw token counts of one corpus. Zero counts are never stored."""

    counts: Mapping[str, int]
    total_tokens: int = field(default=-1)

    def __post_init__(self):
        counts = {w: int(c) for w, c in self.counts.items() if c}
        if any(c < 0 for c in counts.values()):
            raise ValueError("counts must be nonnegative")
        total = sum(counts.values())
        if self.total_tokens not in (-1, total):
            raise ValueError(f"total_tokens={self.total_tokens} but counts sum to {total}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total_tokens", total)

    def __len__(self) -> int:
        return len(self.counts)

    def __contains__(self, word: str) -> bool:
        return word in self.counts

    def __getitem__(self, word: str) -> int:
        return self.counts.get(word, 0)

    def get(self, word: str, default: int = 0) -> int:
        return self.counts.get(word, default)

    def most_common(self, n: int | None = None) -> list[tuple[str, int]]:
        """Words by descending count, ties broken lexicographically."""
        items = sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return items if n is None else items[:n]

    def save(self, path: str | Path) -> None:
        with open_text(path, "w") as fh:
            for word, count in self.most_common():
                fh.write(f"{word}\t{count}\n")

    @classmethod
    def load(cls, path: str | Path) -> "FrequencyTable":
        counts: dict[str, int] = {}
        with open_text(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'")
                word, count = parts
                if word in counts:
                    raise ValueError(f"{path}:{lineno}: duplicate word {word!r}")
                try:
                    counts[word] = int(count)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-integer count {count!r}") from None
        return cls(counts)


def count_frequencies(tokens: Iterable[str]) -> FrequencyTable:
    return FrequencyTable(Counter(tokens))


@dataclass(frozen=True)
class Vocabulary:
    """Ordered word list with ids, raw frequencies and filter flags.

    Vocabularies built with :meth:`from_counts` (and therefore
    :func:`build_vocabulary`) are ordered by descending frequency with ties broken
    lexicographically. A vocabulary read back from an embedding file keeps the
    file's row order.
    """

    words: tuple[str, ...]
    freq: np.ndarray
    is_stopword: np.ndarray = None
    below_min_count: np.ndarray = None
    below_quantile: np.ndarray = None
    ids: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        words = tuple(self.words)
        n = len(words)
        object.__setattr__(self, "words", words)
        ids = {w: i for i, w in enumerate(words)}
        if len(ids) != n:
            dup = next(w for w, c in Counter(words).items() if c > 1)
            raise ValueError(f"duplicate word {dup!r} in vocabulary")
        object.__setattr__(self, "ids", ids)
        for name, dtype in (("freq", np.int64), ("is_stopword", bool),
                            ("below_min_count", bool), ("below_quantile", bool)):
            value = getattr(self, name)
            arr = np.zeros(n, dtype=dtype) if value is None else np.array(value, dtype=dtype)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have one entry per word")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int], **flags) -> "Vocabulary":
        items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(tuple(w for w, _ in items), np.array([c for _, c in items], dtype=np.int64), **flags)

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self) -> Iterator[str]:
        return iter(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.ids

    def index(self, word: str) -> int:
        try:
            return self.ids[word]
        except KeyError:
            raise KeyError(f"word {word!r} not in vocabulary") from None

    def count(self, word: str) -> int:
        return int(self.freq[self.index(word)])

    @property
    def eligible_mask(self) -> np.ndarray:
        return ~(self.is_stopword | self.below_min_count | self.below_quantile)

    def eligible(self) -> list[str]:
        """Ranking-eligible words, in vocabulary order."""
        return [w for w, ok in zip(self.words, self.eligible_mask) if ok]

    def is_eligible(self, word: str) -> bool:
        return bool(self.eligible_mask[self.index(word)])


def build_stopwords(
    ft_a: FrequencyTable,
    ft_b: FrequencyTable,
    n: int = 200,
    extra: Iterable[str] | None = None,
) -> frozenset[str]:
    """The ``n`` most frequent words of each corpus plus any externally supplied words."""
    if n < 0:
        raise ValueError("n must be >= 0")
    stop = {w for w, _ in ft_a.most_common(n)} | {w for w, _ in ft_b.most_common(n)}
    stop.update(extra or ())
    return frozenset(stop)


def build_vocabulary(
    ft: FrequencyTable,
    stop: Iterable[str] = frozenset(),
    min_count: int = 200,
    drop_quantile: float = 0.2,
) -> Vocabulary:
    """Vocabulary over every word of ``ft`` with its filter flags set.

    The quantile cut is over distinct words: the ``floor(drop_quantile * |V|)``
    least frequent words are dropped, except that words tied with the least
    frequent kept word are kept as well.
    """
    if not 0 <= drop_quantile < 1:
        raise ValueError("drop_quantile must be in [0, 1)")
    if len(ft) == 0:
        raise ValueError("cannot build a vocabulary from an empty frequency table")
    stop = frozenset(stop)
    vocab = Vocabulary.from_counts(ft.counts)
    freq = vocab.freq
    n_drop = math.floor(drop_quantile * len(freq) + 1e-9)
    if n_drop:
        boundary = np.sort(freq, kind="stable")[n_drop]
        below_q = freq < boundary
    else:
        below_q = np.zeros(len(freq), dtype=bool)
    return Vocabulary(
        vocab.words,
        freq,
        is_stopword=[w in stop for w in vocab.words],
        below_min_count=freq < min_count,
        below_quantile=below_q,
    )


# --- streaming file helpers ---------------------------------------------------

def open_text(path: str | Path, mode: str = "r") -> io.TextIOBase:
    """Open a UTF-8 text file, through gzip when the name ends in ``.gz``."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8", newline="\n")
    return open(path, mode, encoding="utf-8", newline="\n")


def iter_documents(path: str | Path, dedup: bool = False) -> Iterator[str]:
    """Yield lines of a corpus file, optionally skipping exact duplicate lines."""
    seen: set[bytes] = set()
    with open_text(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if dedup:
                key = hashlib.blake2b(line.encode("utf-8"), digest_size=16).digest()
                if key in seen:
                    continue
                seen.add(key)
            yield line


def tokenize_file(
    path: str | Path, cfg: NormalizerConfig | None = None, dedup: bool = False
) -> Iterator[list[str]]:
    for line in iter_documents(path, dedup=dedup):
        yield normalize_and_tokenize(line, cfg)


def write_token_file(path: str | Path, documents: Iterable[Sequence[str]]) -> int:
    """Write one space-joined document per line; returns the number of tokens written."""
    n = 0
    with open_text(path, "w") as fh:
        for doc in documents:
            fh.write(" ".join(doc))
            fh.write("\n")
            n += len(doc)
    return n


class TokenFile:
    """Re-iterable view of a pre-tokenized corpus file (one document per line)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def __iter__(self) -> Iterator[list[str]]:
        with open_text(self.path) as fh:
            for line in fh:
                yield line.split()


def _count_one(args) -> Counter:
    path, cfg, dedup = args
    counter: Counter = Counter()
    for doc in tokenize_file(path, cfg, dedup):
        counter.update(doc)
    return counter


def count_file_frequencies(
    paths: Sequence[str | Path],
    cfg: NormalizerConfig | None = None,
    dedup: bool = False,
    workers: int = 1,
) -> FrequencyTable:
    """Tokenize and count corpus shards, optionally in worker processes.

    Shard counts are summed in input order, so the result does not depend on
    ``workers``. Deduplication is per shard.
    """
    jobs = [(str(p), cfg, dedup) for p in paths]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_one, jobs))
    else:
        parts = [_count_one(job) for job in jobs]
    total: Counter = Counter()
    for part in parts:
        total.update(part)
    return FrequencyTable(total)


def load_wordlist(path: str | Path) -> list[str]:
    with open_text(path) as fh:
        return [line.strip() for line in fh if line.strip()]


def save_wordlist(path: str | Path, words: Iterable[str]) -> None:
    with open_text(path, "w") as fh:
        for w in sorted(words):
            fh.write(w + "\n")


def flatten(documents: Iterable[Sequence[str]]) -> Iterator[str]:
    return itertools.chain.from_iterable(documents)
