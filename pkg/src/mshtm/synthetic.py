"""Planted-structure transcript corpus for end-to-end checks and benchmarks.

Each theme owns a set of broad words plus one disjoint word set per
subtheme. Documents lean on one theme; a small share of their sentences is
drawn from the other themes. Every sentence is its own interviewee turn, so
its planted label is addressable by (doc_id, timestamp).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .corpus import CleanDocument, CleanTurn
from .vectorizer import load_stopwords

_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "pl", "gr", "st", "kr")
_VOWELS = ("a", "e", "i", "o", "u", "ai", "ou")
_CODAS = ("", "", "n", "r", "l", "s", "k", "m")


@dataclass(frozen=True)
class PlantedLabel:
    theme: int
    subtheme: int


@dataclass(eq=False)
class SyntheticCorpus:
    documents: list[CleanDocument]
    labels: dict[tuple[str, str], PlantedLabel]
    broad_words: list[list[str]]
    subtheme_words: list[list[list[str]]]
    filler_words: list[str]

    def theme_vocabulary(self, theme: int) -> set[str]:
        words = set(self.broad_words[theme])
        for sub in self.subtheme_words[theme]:
            words.update(sub)
        return words

    @property
    def n_sentences(self) -> int:
        return len(self.labels)


def pseudo_words(n: int, rng: np.random.Generator, exclude: set[str] = frozenset()) -> list[str]:
    """``n`` distinct pronounceable tokens of two or three syllables."""
    out: list[str] = []
    seen = set(exclude)
    while len(out) < n:
        parts = []
        for _ in range(int(rng.integers(2, 4))):
            parts.append(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))])
        word = "".join(parts) + _CODAS[rng.integers(len(_CODAS))]
        if word not in seen:
            seen.add(word)
            out.append(word)
    return out


def planted_corpus(
    n_sentences: int = 6000,
    n_themes: int = 3,
    n_subthemes: int = 3,
    sentences_per_doc: int = 20,
    contamination: float = 0.05,
    n_broad_words: int = 15,
    n_subtheme_words: int = 8,
    n_filler_words: int = 20,
    words_per_sentence: tuple[int, int, int] = (4, 2, 2),
    seed: int = 0,
) -> SyntheticCorpus:
    """Generate documents whose sentences mix subtheme, broad and filler words.

    ``words_per_sentence`` gives how many words each sentence draws from
    its subtheme set, its theme's broad set and the shared filler set.
    """
    n_sub, n_broad, n_fill = words_per_sentence
    rng = np.random.default_rng(seed)
    taken = set(load_stopwords("custom"))
    broad, subs = [], []
    for _ in range(n_themes):
        words = pseudo_words(n_broad_words, rng, taken)
        taken.update(words)
        broad.append(words)
        theme_subs = []
        for _ in range(n_subthemes):
            sw = pseudo_words(n_subtheme_words, rng, taken)
            taken.update(sw)
            theme_subs.append(sw)
        subs.append(theme_subs)
    filler = pseudo_words(n_filler_words, rng, taken)

    n_docs = -(-n_sentences // sentences_per_doc)
    documents: list[CleanDocument] = []
    labels: dict[tuple[str, str], PlantedLabel] = {}
    made = 0
    for d in range(n_docs):
        doc_id = f"doc{d:05d}"
        home = d % n_themes
        turns = []
        for s in range(min(sentences_per_doc, n_sentences - made)):
            theme = home
            if n_themes > 1 and rng.random() < contamination:
                theme = int((home + rng.integers(1, n_themes)) % n_themes)
            sub = int(rng.integers(n_subthemes))
            words = list(rng.choice(subs[theme][sub], size=n_sub, replace=False))
            words += list(rng.choice(broad[theme], size=n_broad, replace=False))
            words += list(rng.choice(filler, size=n_fill, replace=False))
            rng.shuffle(words)
            text = " ".join(words).capitalize() + "."
            ts = f"{s * 7000:d}"
            turns.append(CleanTurn(ts, text))
            labels[(doc_id, ts)] = PlantedLabel(theme, sub)
            made += 1
        documents.append(CleanDocument(doc_id, tuple(turns)))
    return SyntheticCorpus(documents, labels, broad, subs, filler)


def write_csv(corpus: SyntheticCorpus, path) -> None:
    """Write the corpus in the transcript CSV layout (all interviewee turns)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["file_num", "time_stamp", "speaker", "text"])
        for doc in corpus.documents:
            for turn in doc.turns:
                writer.writerow([doc.doc_id, turn.timestamp, "interviewee", turn.text])
