"""Split cleaned documents into sentence-level documents of 1..max_chunk sentences."""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable

from .corpus import CleanDocument
from .errors import ConfigurationError

_BOUNDARY = re.compile(r"[.!?]+(?=\s)")
_LEADING_PUNCT = "\"'([{“‘"


@lru_cache(maxsize=1)
def abbreviations() -> frozenset[str]:
    text = resources.files("mshtm").joinpath("data/abbreviations.txt").read_text(encoding="utf-8")
    return frozenset(line.strip().lower() for line in text.splitlines() if line.strip())


@dataclass(frozen=True)
class SentenceDocument:
    sent_id: str
    doc_id: str
    timestamp: str
    text: str
    sentence_count: int


def split_into_sentences(text: str) -> list[str]:
    """Sentence boundaries at ``.``, ``!`` or ``?`` followed by whitespace,
    except after a guarded abbreviation such as ``Mr.`` or ``e.g.``."""
    text = " ".join(text.split())
    guard = abbreviations()
    out = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        word_start = text.rfind(" ", 0, m.start()) + 1
        token = text[word_start : m.end()].lstrip(_LEADING_PUNCT).lower()
        if token in guard:
            continue
        piece = text[start : m.end()].strip()
        if piece:
            out.append(piece)
        start = m.end()
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def split_sentences(doc: CleanDocument, max_chunk: int = 5) -> list[SentenceDocument]:
    """One SentenceDocument per turn, or consecutive greedy chunks of
    ``max_chunk`` sentences when the turn is longer."""
    if max_chunk < 1:
        raise ConfigurationError("max_chunk must be >= 1")
    out = []
    for t_idx, turn in enumerate(doc.turns):
        sentences = split_into_sentences(turn.text)
        for c_idx, lo in enumerate(range(0, len(sentences), max_chunk)):
            chunk = sentences[lo : lo + max_chunk]
            out.append(
                SentenceDocument(
                    sent_id=f"{doc.doc_id}#{t_idx}.{c_idx}",
                    doc_id=doc.doc_id,
                    timestamp=turn.timestamp,
                    text=" ".join(chunk),
                    sentence_count=len(chunk),
                )
            )
    return out


def split_corpus(docs: Iterable[CleanDocument], max_chunk: int = 5) -> list[SentenceDocument]:
    out = []
    for doc in docs:
        out.extend(split_sentences(doc, max_chunk))
    return out
