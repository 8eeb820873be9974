"""Topic coherence by normalized pointwise mutual information.

Probabilities are document frequencies over a window corpus; the window is
one sentence-level document. For a pair (x, y)::

    pmi  = ln((p(x, y) + eps) / (p(x) p(y)))
    npmi = pmi / -ln(p(x, y) + eps)        clamped to [-1, 1]

``eps`` smooths only the joint probability.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, UndefinedTermError

_TOKEN = re.compile(r"\w+")
DEFAULT_EPS = 1e-12


@dataclass(eq=False)
class CooccurrenceStats:
    """Term -> set of window indices, plus the window count."""

    postings: dict[str, frozenset[int]]
    n_windows: int
    _pair_cache: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)
    _bits: dict[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "CooccurrenceStats":
        postings: dict[str, set[int]] = {}
        n = 0
        for i, text in enumerate(texts):
            n = i + 1
            for term in set(_TOKEN.findall(text.lower())):
                postings.setdefault(term, set()).add(i)
        return cls({t: frozenset(s) for t, s in postings.items()}, n)

    @classmethod
    def from_token_sets(cls, windows: Iterable[Iterable[str]]) -> "CooccurrenceStats":
        postings: dict[str, set[int]] = {}
        n = 0
        for i, terms in enumerate(windows):
            n = i + 1
            for term in set(terms):
                postings.setdefault(term, set()).add(i)
        return cls({t: frozenset(s) for t, s in postings.items()}, n)

    def occurs(self, term: str) -> bool:
        return bool(self.postings.get(term))

    def p(self, term: str) -> float:
        return len(self.postings.get(term, ())) / self.n_windows

    def p_joint(self, x: str, y: str) -> float:
        key = (x, y) if x <= y else (y, x)
        hit = self._pair_cache.get(key)
        if hit is None:
            hit = (self._bitset(x) & self._bitset(y)).bit_count()
            self._pair_cache[key] = hit
        return hit / self.n_windows

    def _bitset(self, term: str) -> int:
        # window set as one big int, so a pair count is an AND and a popcount
        bits = self._bits.get(term)
        if bits is None:
            flags = np.zeros(self.n_windows, dtype=bool)
            flags[np.fromiter(self.postings.get(term, ()), dtype=np.intp)] = True
            bits = int.from_bytes(np.packbits(flags, bitorder="little").tobytes(), "little")
            self._bits[term] = bits
        return bits


def npmi_from_probabilities(px: float, py: float, pxy: float, eps: float = DEFAULT_EPS) -> float:
    joint = pxy + eps
    if joint >= 1.0:
        # both terms in every window: perfect co-occurrence
        return 1.0
    if joint <= 0.0:
        return -1.0
    pmi = math.log(joint / (px * py))
    return max(-1.0, min(1.0, pmi / -math.log(joint)))


def npmi_pair(x: str, y: str, stats: CooccurrenceStats, eps: float = DEFAULT_EPS) -> float:
    for term in (x, y):
        if not stats.occurs(term):
            raise UndefinedTermError(f"term {term!r} never occurs in the reference corpus")
    return npmi_from_probabilities(stats.p(x), stats.p(y), stats.p_joint(x, y), eps)


@dataclass(frozen=True)
class TopicCoherence:
    score: float
    skipped: tuple[str, ...]
    n_pairs: int


def score_topic(words: Sequence[str], stats: CooccurrenceStats, eps: float = DEFAULT_EPS) -> TopicCoherence:
    """Mean pairwise NPMI over the scorable words; unscorable ones are skipped."""
    seen: list[str] = []
    for w in words:
        if w not in seen:
            seen.append(w)
    scorable = [w for w in seen if stats.occurs(w)]
    skipped = tuple(w for w in seen if not stats.occurs(w))
    if len(scorable) < 2:
        raise ConfigurationError(
            f"need at least 2 scorable words for NPMI, got {len(scorable)} (skipped: {list(skipped)})"
        )
    pairs = list(itertools.combinations(sorted(scorable), 2))
    total = math.fsum(npmi_pair(x, y, stats, eps) for x, y in pairs)
    return TopicCoherence(total / len(pairs), skipped, len(pairs))


def topic_npmi(words: Sequence[str], stats: CooccurrenceStats, eps: float = DEFAULT_EPS) -> float:
    return score_topic(words, stats, eps).score
