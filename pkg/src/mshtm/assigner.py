"""Per-topic statistical thresholds and multi-label sentence assignment.

A sentence joins broad topic ``i`` when its coding coefficient for that
topic is at least ``mean_i + k * std_i``, the statistics taken over every
sentence's coefficient for topic ``i`` (population standard deviation).
A sentence can join any number of topics, including none.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DimensionError


def row_stats(row: np.ndarray) -> tuple[float, float]:
    """Mean and population std of one coding row.

    The mean is clamped into ``[min, max]`` and a constant row reports
    std 0 exactly, so a constant row's threshold equals its value and the
    inclusive comparison assigns every sentence.
    """
    row = np.asarray(row, dtype=np.float64)
    lo, hi = float(row.min()), float(row.max())
    if lo == hi:
        return lo, 0.0
    mean = min(max(float(row.mean()), lo), hi)
    return mean, float(row.std())


def threshold_value(row: np.ndarray, k: float = 1.0) -> float:
    mean, std = row_stats(row)
    return mean + k * std


@dataclass(frozen=True)
class TopicThreshold:
    topic_index: int
    mean: float
    std: float
    k: float
    threshold: float


@dataclass(frozen=True)
class TopicAssignment:
    sent_id: str
    assigned_topics: frozenset[int]
    coefficients: tuple[float, ...]


def compute_thresholds(H_sentence: np.ndarray, k: float = 1.0) -> list[TopicThreshold]:
    H = np.asarray(H_sentence, dtype=np.float64)
    if H.ndim != 2:
        raise DimensionError(f"expected an r x n coding matrix, got shape {H.shape}")
    if H.shape[1] == 0:
        raise DimensionError("cannot compute thresholds over zero sentences")
    out = []
    for i in range(H.shape[0]):
        mean, std = row_stats(H[i])
        out.append(TopicThreshold(i, mean, std, float(k), mean + k * std))
    return out


def assignment_mask(H_sentence: np.ndarray, thresholds: Sequence[TopicThreshold]) -> np.ndarray:
    """Boolean r x n matrix, True where the sentence joins the topic."""
    H = np.asarray(H_sentence, dtype=np.float64)
    if len(thresholds) != H.shape[0]:
        raise DimensionError(f"{len(thresholds)} thresholds for {H.shape[0]} topics")
    limits = np.array([t.threshold for t in sorted(thresholds, key=lambda t: t.topic_index)])
    return H >= limits[:, None]


def assign(
    H_sentence: np.ndarray,
    thresholds: Sequence[TopicThreshold],
    sent_ids: Sequence[str] | None = None,
) -> list[TopicAssignment]:
    H = np.asarray(H_sentence, dtype=np.float64)
    mask = assignment_mask(H, thresholds)
    if sent_ids is None:
        sent_ids = [str(j) for j in range(H.shape[1])]
    elif len(sent_ids) != H.shape[1]:
        raise DimensionError(f"{len(sent_ids)} sentence ids for {H.shape[1]} columns")
    topics = range(H.shape[0])
    return [
        TopicAssignment(
            sent_id=sid,
            assigned_topics=frozenset(i for i, hit in zip(topics, hits) if hit),
            coefficients=tuple(coefs),
        )
        for sid, hits, coefs in zip(sent_ids, mask.T.tolist(), H.T.tolist())
    ]


def unassigned(assignments: Sequence[TopicAssignment]) -> list[str]:
    return [a.sent_id for a in assignments if not a.assigned_topics]


def write_assignments_csv(
    path: str | Path,
    assignments: Sequence[TopicAssignment],
    provenance: Mapping[str, tuple[str, str]],
    subtopics: Mapping[tuple[str, int], int] | None = None,
) -> None:
    """CSV columns: sent_id, doc_id, timestamp, topics[, subtopics].

    ``provenance`` maps sent_id to (doc_id, timestamp). Topic lists are
    ``;``-separated; subtopic entries read ``topic:cluster`` with -1 for
    noise.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["sent_id", "doc_id", "timestamp", "topics"]
        if subtopics is not None:
            header.append("subtopics")
        writer.writerow(header)
        for a in assignments:
            doc_id, ts = provenance[a.sent_id]
            topics = sorted(a.assigned_topics)
            row = [a.sent_id, doc_id, ts, ";".join(map(str, topics))]
            if subtopics is not None:
                row.append(
                    ";".join(
                        f"{t}:{subtopics[(a.sent_id, t)]}" for t in topics if (a.sent_id, t) in subtopics
                    )
                )
            writer.writerow(row)
