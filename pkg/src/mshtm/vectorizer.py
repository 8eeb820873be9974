"""Vocabulary building and TF-IDF term-document matrices.

Matrices are oriented terms x documents (one column per document), the
orientation the factorization code expects.

TF-IDF variant: raw counts times smoothed idf ``ln((1 + n) / (1 + df)) + 1``
with ``n`` and ``df`` taken from the corpus the vocabulary was built on, then
each column scaled to unit L2 norm. Encoding sentences against a vocabulary
built on whole documents therefore reuses the document-level idf.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError

_TOKEN = re.compile(r"\w+")

STOPWORDS_SHA256 = "4e22be0ad71ae1c41dd7a8f944e851ead671d114edf4faad1ee8c698d2ba5084"

PROFILE_EXTRAS = {
    "shoah": frozenset({"um", "uh"}),
    "mediasum": frozenset({"s", "t", "don", "ve", "did", "got"}),
    "custom": frozenset(),
}


def _base_stopwords() -> frozenset[str]:
    raw = resources.files("mshtm").joinpath("data/english_stopwords.txt").read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != STOPWORDS_SHA256:
        raise ConfigurationError(f"bundled stopword list checksum mismatch: {digest}")
    return frozenset(w for w in raw.decode("utf-8").split() if w)


def load_stopwords(profile: str = "custom", extra: Iterable[str] = ()) -> frozenset[str]:
    """Bundled English stopwords plus the profile's additions plus ``extra``."""
    if profile not in PROFILE_EXTRAS:
        raise ConfigurationError(
            f"unknown stopword profile {profile!r}; expected one of {sorted(PROFILE_EXTRAS)}"
        )
    return _base_stopwords() | PROFILE_EXTRAS[profile] | frozenset(w.lower() for w in extra)


def read_stopword_file(path: str | Path) -> frozenset[str]:
    """One term per line; blank lines and ``#`` comments ignored."""
    terms = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            terms.add(line.lower())
    return frozenset(terms)


@dataclass(frozen=True)
class VectorizerConfig:
    max_df: float = 1.0
    min_df: float | int = 1
    ngram_range: tuple[int, int] = (1, 1)
    stopwords: frozenset[str] = frozenset()
    lowercase: bool = True

    def __post_init__(self):
        lo, hi = self.ngram_range
        if not (1 <= lo <= hi):
            raise ConfigurationError(f"invalid ngram_range {self.ngram_range}")
        if not (0 < self.max_df <= 1):
            raise ConfigurationError("max_df must be a fraction in (0, 1]")
        if isinstance(self.min_df, float) and not (0 <= self.min_df < 1):
            raise ConfigurationError("fractional min_df must lie in [0, 1)")
        if isinstance(self.min_df, int) and self.min_df < 0:
            raise ConfigurationError("min_df count must be non-negative")
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))

    def df_bounds(self, n_docs: int) -> tuple[int, int]:
        """Resolve (min, max) document-frequency counts, both inclusive."""
        # round() guards products like 0.07 * 100 = 7.000000000000001
        if isinstance(self.min_df, float):
            lo = math.ceil(round(self.min_df * n_docs, 9))
        else:
            lo = self.min_df
        hi = math.floor(round(self.max_df * n_docs, 9))
        return lo, hi

    def analyze(self, text: str) -> list[str]:
        """Tokenize one text into n-gram terms, dropping stopwords first."""
        if self.lowercase:
            text = text.lower()
        tokens = [t for t in _TOKEN.findall(text) if t not in self.stopwords]
        lo, hi = self.ngram_range
        if lo == hi == 1:
            return tokens
        terms = []
        for n in range(lo, hi + 1):
            terms.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
        return terms


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Sorted term list with the document statistics it was built from."""

    terms: tuple[str, ...]
    doc_freq: np.ndarray
    n_docs: int
    config: VectorizerConfig
    term_index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "term_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def idf(self) -> np.ndarray:
        return np.log((1.0 + self.n_docs) / (1.0 + self.doc_freq)) + 1.0

    def digest(self) -> str:
        h = hashlib.sha256()
        for t in self.terms:
            h.update(t.encode("utf-8") + b"\n")
        return h.hexdigest()


def build_vocabulary(docs: Sequence[str], cfg: VectorizerConfig | None = None) -> Vocabulary:
    cfg = cfg or VectorizerConfig()
    if not docs:
        raise ConfigurationError("cannot build a vocabulary from zero documents")
    df: dict[str, int] = {}
    for doc in docs:
        for term in set(cfg.analyze(doc)):
            df[term] = df.get(term, 0) + 1
    lo, hi = cfg.df_bounds(len(docs))
    if lo > hi:
        raise ConfigurationError(
            f"min_df resolves to {lo} documents but max_df to {hi}; loosen the thresholds"
        )
    terms = sorted(t for t, c in df.items() if lo <= c <= hi)
    if not terms:
        raise ConfigurationError(
            f"vocabulary is empty after document-frequency filtering (df in [{lo}, {hi}] "
            f"over {len(docs)} documents); loosen max_df/min_df or the stopword list"
        )
    return Vocabulary(
        terms=tuple(terms),
        doc_freq=np.array([df[t] for t in terms], dtype=np.float64),
        n_docs=len(docs),
        config=cfg,
    )


@dataclass(frozen=True, eq=False)
class TermDocMatrix:
    """Sparse nonnegative TF-IDF matrix, terms x documents."""

    values: sp.csc_matrix
    vocabulary: Vocabulary

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column_subset(self, columns: Sequence[int]) -> "TermDocMatrix":
        return TermDocMatrix(self.values[:, np.asarray(columns, dtype=np.intp)], self.vocabulary)

    def write_triplets(self, path: str | Path) -> None:
        """Debug export: one ``row col value`` line per nonzero."""
        coo = self.values.tocoo()
        order = np.lexsort((coo.row, coo.col))
        with open(path, "w", encoding="utf-8") as fh:
            for k in order:
                fh.write(f"{int(coo.row[k])} {int(coo.col[k])} {float(coo.data[k])!r}\n")


def count_matrix(docs: Sequence[str] | Sequence[Sequence[str]], vocab: Vocabulary) -> sp.csc_matrix:
    """Raw in-vocabulary term counts, terms x documents.

    A document is either raw text or a term list already produced by the
    vocabulary's analyzer.
    """
    rows, cols, vals = [], [], []
    index = vocab.term_index
    analyze = vocab.config.analyze
    for j, doc in enumerate(docs):
        counts: dict[int, int] = {}
        for term in analyze(doc) if isinstance(doc, str) else doc:
            i = index.get(term)
            if i is not None:
                counts[i] = counts.get(i, 0) + 1
        rows.extend(counts.keys())
        cols.extend([j] * len(counts))
        vals.extend(counts.values())
    return sp.csc_matrix(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows, dtype=np.intp), np.asarray(cols, dtype=np.intp))),
        shape=(len(vocab), len(docs)),
    )


def tfidf(docs: Sequence[str] | Sequence[Sequence[str]], vocab: Vocabulary) -> TermDocMatrix:
    counts = count_matrix(docs, vocab)
    weighted = sp.diags(vocab.idf) @ counts
    weighted = sp.csc_matrix(weighted)
    norms = np.sqrt(np.asarray(weighted.multiply(weighted).sum(axis=0)).ravel())
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    weighted = sp.csc_matrix(weighted @ sp.diags(scale))
    weighted.sort_indices()
    return TermDocMatrix(weighted, vocab)
