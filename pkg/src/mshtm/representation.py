"""Cluster-level term weighting (c-TF-IDF), top words, and topic linkage.

For term x and cluster c::

    W[x, c] = f[x, c] * ln(1 + A / f[x])

f[x, c] counts x in the cluster's concatenated text, f[x] sums that over
all clusters, and A is the in-vocabulary token total divided by the number
of clusters. The noise label -1 never takes part.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cluster import NOISE
from .errors import ConfigurationError, DegenerateInputError
from .vectorizer import Vocabulary, count_matrix


@dataclass(eq=False)
class ClusterTermScores:
    cluster_ids: tuple[int, ...]
    scores: np.ndarray  # clusters x terms
    counts: np.ndarray  # clusters x terms
    sizes: tuple[int, ...]
    avg_words: float
    terms: tuple[str, ...]

    def row(self, cluster_id: int) -> np.ndarray:
        return self.scores[self.cluster_ids.index(cluster_id)]


def ctfidf(
    cluster_docs: Mapping[int, str | Sequence[str]], vocab: Vocabulary
) -> ClusterTermScores:
    """Score every vocabulary term for every non-noise cluster.

    Values of ``cluster_docs`` are either one concatenated text or the
    list of member texts; in the latter case the list length is recorded
    as the cluster size.
    """
    if len(vocab) == 0:
        raise ConfigurationError("c-TF-IDF needs a non-empty vocabulary")
    ids = sorted(c for c in cluster_docs if c != NOISE)
    if not ids:
        raise ConfigurationError("c-TF-IDF needs at least one non-noise cluster")
    texts, sizes = [], []
    for c in ids:
        doc = cluster_docs[c]
        if isinstance(doc, str):
            texts.append(doc)
            sizes.append(1)
        else:
            texts.append(" ".join(doc))
            sizes.append(len(doc))
    counts = count_matrix(texts, vocab).T.toarray()
    f_x = counts.sum(axis=0)
    total = counts.sum()
    if total <= 0:
        raise DegenerateInputError("clusters contain no in-vocabulary tokens")
    A = total / len(ids)
    idf = np.log1p(np.divide(A, f_x, out=np.zeros_like(f_x), where=f_x > 0))
    return ClusterTermScores(
        cluster_ids=tuple(ids),
        scores=counts * idf,
        counts=counts,
        sizes=tuple(sizes),
        avg_words=float(A),
        terms=vocab.terms,
    )


def top_word_scores(scores: ClusterTermScores, n_words: int) -> dict[int, list[tuple[str, float]]]:
    if n_words < 1:
        raise ConfigurationError("n_words must be >= 1")
    terms = np.array(scores.terms, dtype=object)
    lex_rank = np.empty(len(terms), dtype=np.int64)
    lex_rank[np.argsort(terms, kind="stable")] = np.arange(len(terms))
    out = {}
    for c, row in zip(scores.cluster_ids, scores.scores):
        present = np.flatnonzero(row > 0)
        order = present[np.lexsort((lex_rank[present], -row[present]))][:n_words]
        out[c] = [(scores.terms[i], float(row[i])) for i in order]
    return out


def top_words(scores: ClusterTermScores, n_words: int) -> dict[int, list[str]]:
    """Highest-scoring terms per cluster; ties resolve lexicographically."""
    return {c: [w for w, _ in ws] for c, ws in top_word_scores(scores, n_words).items()}


@dataclass(eq=False)
class TopicLinkage:
    """Average-linkage merge tree over clusters.

    ``merges`` follows the scipy linkage layout: row k merges nodes
    ``merges[k, 0]`` and ``merges[k, 1]`` (leaves are ``0..m-1`` in
    ``leaves`` order, merged nodes ``m + k``) at distance ``merges[k, 2]``
    into a node of ``merges[k, 3]`` leaves.
    """

    leaves: tuple[int, ...]
    merges: np.ndarray


def cosine_distances(vectors: np.ndarray) -> np.ndarray:
    """Pairwise ``1 - cos`` between rows, clipped to [0, 1].

    Values within 1e-12 of zero snap to 0 so identical directions merge at
    exactly 0. A zero row is at distance 1 from every nonzero row.
    """
    V = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(V, axis=1)
    U = np.divide(V, norms[:, None], out=np.zeros_like(V), where=norms[:, None] > 0)
    D = 1.0 - U @ U.T
    D[np.abs(D) < 1e-12] = 0.0
    zero = norms == 0
    D[zero, :] = 1.0
    D[:, zero] = 1.0
    D[np.ix_(zero, zero)] = 0.0
    np.fill_diagonal(D, 0.0)
    return np.clip(D, 0.0, 1.0)


def average_linkage(D: np.ndarray) -> np.ndarray:
    """Agglomerative average linkage on a distance matrix.

    Ties go to the pair with the lowest (row, column) slot, where a merged
    node inherits the lower slot of its two children.
    """
    m = D.shape[0]
    work = np.array(D, dtype=np.float64, copy=True)
    np.fill_diagonal(work, np.inf)
    node = np.arange(m)
    size = np.ones(m)
    height = np.zeros(m)
    merges = np.empty((max(m - 1, 0), 4))
    for step in range(m - 1):
        flat = int(np.argmin(work))
        i, j = divmod(flat, m)
        if i > j:
            i, j = j, i
        dist = max(work[i, j], height[i], height[j])  # guards float drift
        a, b = sorted((node[i], node[j]))
        merges[step] = (a, b, dist, size[i] + size[j])
        merged = (size[i] * work[i] + size[j] * work[j]) / (size[i] + size[j])
        work[i, :] = merged
        work[:, i] = merged
        work[j, :] = np.inf
        work[:, j] = np.inf
        work[i, i] = np.inf
        size[i] += size[j]
        height[i] = dist
        node[i] = m + step
    return merges


def topic_linkage(scores: ClusterTermScores) -> TopicLinkage:
    leaves = scores.cluster_ids
    if len(leaves) < 2:
        return TopicLinkage(leaves, np.empty((0, 4)))
    return TopicLinkage(leaves, average_linkage(cosine_distances(scores.scores)))


def write_top_words_csv(path: str | Path, columns: Mapping[str, Sequence[str]], n_rows: int = 15) -> None:
    """One column per topic, ``n_rows`` keyword rows, blanks where short."""
    names = list(columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for r in range(n_rows):
            writer.writerow([columns[k][r] if r < len(columns[k]) else "" for k in names])
