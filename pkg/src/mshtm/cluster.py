"""Dimensionality reduction and HDBSCAN density clustering.

The HDBSCAN pipeline is the classic one: core distances, mutual
reachability, an exact minimum spanning tree (dense Prim, O(n^2) time and
O(n) memory), the single-linkage hierarchy, the tree condensed at
``min_cluster_size``, and excess-of-mass cluster selection. Points that
never belong to a selected cluster are labeled -1.

Core distance convention: ``core_k(a)`` is the distance from ``a`` to its
k-th nearest *other* point, k = ``min_samples``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.spatial import cKDTree

from .embedder import EmbeddingMatrix
from .errors import ConfigurationError, DimensionError

NOISE = -1


@dataclass(eq=False)
class ReducedPoints:
    values: np.ndarray
    method_tag: str
    explained_variance: np.ndarray | None = None

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def reduce(E, dim: int = 5, method: str = "truncated-svd") -> ReducedPoints:
    """Project embeddings to ``dim`` dimensions.

    ``truncated-svd`` projects the mean-centered rows onto their top
    ``dim`` right singular directions (each direction's sign fixed so its
    largest-magnitude loading is positive). ``none`` passes rows through.
    """
    X = E.values if isinstance(E, EmbeddingMatrix) else np.asarray(E, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D embedding matrix, got shape {X.shape}")
    if method == "none":
        return ReducedPoints(X, "none")
    if method != "truncated-svd":
        raise ConfigurationError(f"unknown reduction method {method!r}")
    if dim > X.shape[1]:
        raise DimensionError(f"target dim {dim} exceeds embedding dim {X.shape[1]}")
    if dim < 1:
        raise DimensionError("target dim must be >= 1")
    Xc = X - X.mean(axis=0)
    # eigh on the D x D scatter keeps memory at O(D^2) beyond the data
    evals, evecs = np.linalg.eigh(Xc.T @ Xc)
    order = np.argsort(evals)[::-1][:dim]
    V = evecs[:, order]
    pivot = np.abs(V).argmax(axis=0)
    V = V * np.where(V[pivot, np.arange(dim)] < 0, -1.0, 1.0)
    explained = np.maximum(evals[order], 0.0) / max(X.shape[0], 1)
    return ReducedPoints(Xc @ V, f"truncated-svd/{dim}", explained)


@dataclass(frozen=True)
class HdbscanConfig:
    min_cluster_size: int = 15
    min_samples: int | None = None
    metric: str = "euclidean"

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ConfigurationError("min_cluster_size must be >= 2")
        if self.min_samples is not None:
            if self.min_samples < 1:
                raise ConfigurationError("min_samples must be >= 1")
            if self.min_samples > self.min_cluster_size:
                raise ConfigurationError("min_samples must not exceed min_cluster_size")
        if self.metric not in ("euclidean", "cosine"):
            raise ConfigurationError(f"unsupported metric {self.metric!r}")

    @property
    def k(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size


def _points(points) -> np.ndarray:
    X = points.values if isinstance(points, (ReducedPoints, EmbeddingMatrix)) else points
    return np.asarray(X, dtype=np.float64)


class MutualReachability:
    """Lazy accessor for ``max(core(a), core(b), d(a, b))``.

    The cosine metric is evaluated as ``||u/|u| - v/|v|||^2 / 2``, which
    equals ``1 - cos`` for nonzero rows; zero rows sit at 0.5 from all.
    """

    def __init__(self, points, min_samples: int, metric: str = "euclidean"):
        X = _points(points)
        n = X.shape[0]
        if min_samples < 1:
            raise ConfigurationError("min_samples must be >= 1")
        if n < min_samples + 1:
            raise DimensionError(
                f"{n} points cannot provide a {min_samples}-th nearest neighbour"
            )
        self.metric = metric
        if metric == "cosine":
            norms = np.linalg.norm(X, axis=1, keepdims=True)
            X = np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)
        elif metric != "euclidean":
            raise ConfigurationError(f"unsupported metric {metric!r}")
        self.X = X
        dist, _ = cKDTree(X).query(X, k=min_samples + 1)
        kth = dist[:, min_samples] if dist.ndim == 2 else dist
        self.core = kth**2 / 2.0 if metric == "cosine" else kth

    def __len__(self) -> int:
        return self.X.shape[0]

    def distance_row(self, i: int) -> np.ndarray:
        diff = self.X - self.X[i]
        sq = np.einsum("ij,ij->i", diff, diff)
        return sq / 2.0 if self.metric == "cosine" else np.sqrt(sq)

    def row(self, i: int) -> np.ndarray:
        return np.maximum(np.maximum(self.distance_row(i), self.core[i]), self.core)

    def __call__(self, a: int, b: int) -> float:
        return float(self.row(a)[b])

    def matrix(self) -> np.ndarray:
        out = np.empty((len(self), len(self)))
        for i in range(len(self)):
            out[i] = self.row(i)
        np.fill_diagonal(out, 0.0)
        return out


def mutual_reachability(points, min_samples: int, metric: str = "euclidean") -> MutualReachability:
    return MutualReachability(points, min_samples, metric)


@numba.njit(cache=True)
def _prim(X, core, cosine):
    # Euclidean comparisons run on squared distances (same MST, no sqrt per
    # pair); the reported weight is recomputed exactly on each improvement.
    n, dim = X.shape
    edges = np.empty((n - 1, 3))
    key = core / 2.0 if cosine else core * core
    # active candidates occupy slots [0, m); removal swaps in the last slot
    ids = np.arange(1, n)
    pts = X[1:].copy()
    pkey = key[1:].copy()
    best = np.full(n - 1, np.inf)
    weight = np.full(n - 1, np.inf)
    source = np.zeros(n - 1, dtype=np.int64)
    current = 0
    for step in range(n - 1):
        m = n - 1 - step
        c_key = key[current]
        pos = -1
        pos_w = np.inf
        for j in range(m):
            sq = 0.0
            for t in range(dim):
                diff = pts[j, t] - X[current, t]
                sq += diff * diff
            d = sq / 2.0 if cosine else sq
            which = 0
            if c_key > d:
                d = c_key
                which = 1
            if pkey[j] > d:
                d = pkey[j]
                which = 2
            if d < best[j]:
                best[j] = d
                source[j] = current
                if cosine:
                    weight[j] = d
                elif which == 0:
                    weight[j] = np.sqrt(sq)
                elif which == 1:
                    weight[j] = core[current]
                else:
                    weight[j] = core[ids[j]]
            if best[j] < pos_w or (best[j] == pos_w and ids[j] < ids[pos]):
                pos_w = best[j]
                pos = j
        current = ids[pos]
        edges[step, 0] = source[pos]
        edges[step, 1] = current
        edges[step, 2] = weight[pos]
        last = m - 1
        ids[pos] = ids[last]
        pkey[pos] = pkey[last]
        best[pos] = best[last]
        weight[pos] = weight[last]
        source[pos] = source[last]
        for t in range(dim):
            pts[pos, t] = pts[last, t]
    return edges


def minimum_spanning_tree(mr: MutualReachability) -> np.ndarray:
    """Prim's algorithm on the implicit complete mutual-reachability graph.

    Returns an (n-1, 3) array of ``(u, v, weight)`` rows in insertion
    order. On equal weights the lower point index is attached first.
    """
    n = len(mr)
    if n < 2:
        return np.empty((0, 3))
    X = np.ascontiguousarray(mr.X, dtype=np.float64)
    core = np.ascontiguousarray(mr.core, dtype=np.float64)
    return _prim(X, core, mr.metric == "cosine")


def single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Scipy-style linkage matrix ``[left, right, distance, size]`` from MST edges."""
    order = np.argsort(edges[:, 2], kind="stable")
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)
    Z = np.empty((n - 1, 4))

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    for k, e in enumerate(order):
        a, b, w = int(edges[e, 0]), int(edges[e, 1]), edges[e, 2]
        ra, rb = find(a), find(b)
        new = n + k
        size[new] = size[ra] + size[rb]
        Z[k] = (min(ra, rb), max(ra, rb), w, size[new])
        parent[ra] = parent[rb] = new
    return Z


@dataclass(eq=False)
class CondensedTree:
    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    child_size: np.ndarray
    n_points: int


def _subtree(Z: np.ndarray, n: int, node: int) -> list[int]:
    out, stack = [], [node]
    while stack:
        x = stack.pop()
        out.append(x)
        if x >= n:
            stack.append(int(Z[x - n, 1]))
            stack.append(int(Z[x - n, 0]))
    return out


def condense_tree(Z: np.ndarray, n: int, min_cluster_size: int) -> CondensedTree:
    root = 2 * n - 2
    size = lambda node: 1 if node < n else int(Z[node - n, 3])  # noqa: E731
    relabel = np.zeros(2 * n - 1, dtype=np.intp)
    relabel[root] = n
    next_label = n + 1
    ignore = np.zeros(2 * n - 1, dtype=bool)
    rows: list[tuple[int, int, float, int]] = []

    queue = [root]
    head = 0
    while head < len(queue):
        node = queue[head]
        head += 1
        if node < n or ignore[node]:
            continue
        dist = Z[node - n, 2]
        # merges at the same height form one n-ary split, so the tree does
        # not depend on how the MST happened to break ties
        kids, stack = [], [int(Z[node - n, 1]), int(Z[node - n, 0])]
        while stack:
            x = stack.pop()
            if x >= n and Z[x - n, 2] == dist:
                stack.extend((int(Z[x - n, 1]), int(Z[x - n, 0])))
            else:
                kids.append(x)
        queue.extend(kids)
        lam = 1.0 / dist if dist > 0 else np.inf
        parent = int(relabel[node])
        big = [ch for ch in kids if size(ch) >= min_cluster_size]
        for ch in kids:
            cnt = size(ch)
            if cnt < min_cluster_size:
                for sub in _subtree(Z, n, ch):
                    ignore[sub] = True
                    if sub < n:
                        rows.append((parent, sub, lam, 1))
            elif len(big) > 1:
                relabel[ch] = next_label
                rows.append((parent, next_label, lam, cnt))
                next_label += 1
            else:
                relabel[ch] = parent
    arr = np.array(rows, dtype=object) if rows else np.empty((0, 4), dtype=object)
    return CondensedTree(
        parent=arr[:, 0].astype(np.intp),
        child=arr[:, 1].astype(np.intp),
        lam=arr[:, 2].astype(np.float64),
        child_size=arr[:, 3].astype(np.intp),
        n_points=n,
    )


def cluster_stability(tree: CondensedTree) -> dict[int, float]:
    n = tree.n_points
    top = int(max(tree.parent.max(initial=n), tree.child.max(initial=n)))
    birth = np.zeros(top + 1)
    is_cluster_row = tree.child >= n
    birth[tree.child[is_cluster_row]] = tree.lam[is_cluster_row]
    with np.errstate(invalid="ignore"):
        contrib = (tree.lam - birth[tree.parent]) * tree.child_size
    contrib = np.nan_to_num(contrib, nan=0.0, posinf=np.inf)
    stability = {int(c): 0.0 for c in np.unique(np.concatenate([tree.parent, tree.child[is_cluster_row]]))}
    for p, v in zip(tree.parent.tolist(), contrib.tolist()):
        stability[p] += v
    return stability


def select_clusters_eom(tree: CondensedTree, allow_single_cluster: bool = False) -> list[int]:
    stability = cluster_stability(tree)
    n = tree.n_points
    children: dict[int, list[int]] = {c: [] for c in stability}
    for p, c in zip(tree.parent.tolist(), tree.child.tolist()):
        if c >= n:
            children[p].append(c)
    nodes = sorted(stability, reverse=True)
    if not allow_single_cluster:
        nodes = [c for c in nodes if c != n]
    selected = {c: True for c in nodes}
    for node in nodes:
        subtree_stability = sum(stability[c] for c in children[node])
        if subtree_stability > stability[node]:
            selected[node] = False
            stability[node] = subtree_stability
        else:
            stack = list(children[node])
            while stack:
                sub = stack.pop()
                selected[sub] = False
                stack.extend(children[sub])
    return sorted(c for c, keep in selected.items() if keep)


@dataclass(eq=False)
class ClusterLabels:
    labels: np.ndarray
    probabilities: np.ndarray | None = None
    mst_weight: float | None = field(default=None)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max(initial=NOISE)) + 1

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels == NOISE)) if self.labels.size else 0.0


def _label_points(tree: CondensedTree, clusters: list[int]) -> tuple[np.ndarray, np.ndarray]:
    n = tree.n_points
    top = int(max(tree.parent.max(initial=n), tree.child.max(initial=n)))
    parent_of = np.full(top + 1, -1, dtype=np.intp)
    parent_of[tree.child] = tree.parent
    point_lam = np.zeros(n)
    leaf = tree.child < n
    point_lam[tree.child[leaf]] = tree.lam[leaf]

    label_of_cluster = {c: i for i, c in enumerate(clusters)}
    owner = np.full(top + 1, NOISE, dtype=np.intp)
    for c in range(n, top + 1):  # parents carry smaller labels than children
        if c in label_of_cluster:
            owner[c] = c
        elif parent_of[c] >= 0:
            owner[c] = owner[parent_of[c]]

    death = np.zeros(top + 1)
    np.maximum.at(death, tree.parent, np.where(np.isfinite(tree.lam), tree.lam, 0.0))

    labels = np.full(n, NOISE, dtype=np.intp)
    probs = np.zeros(n)
    for p in range(n):
        c = owner[parent_of[p]]
        if c == NOISE:
            continue
        labels[p] = label_of_cluster[c]
        max_lam = death[c]
        lam = point_lam[p]
        probs[p] = 1.0 if (max_lam <= 0 or not np.isfinite(lam)) else min(lam, max_lam) / max_lam
    return labels, probs


def hdbscan(points, cfg: HdbscanConfig | None = None) -> ClusterLabels:
    cfg = cfg or HdbscanConfig()
    X = _points(points)
    n = X.shape[0]
    if n < cfg.min_cluster_size:
        raise DimensionError(f"{n} points is fewer than min_cluster_size={cfg.min_cluster_size}")
    if n > 0 and np.all(X == X[0]):
        return ClusterLabels(np.zeros(n, dtype=np.intp), np.ones(n), 0.0)
    mr = MutualReachability(X, cfg.k, cfg.metric)
    edges = minimum_spanning_tree(mr)
    Z = single_linkage(edges, n)
    tree = condense_tree(Z, n, cfg.min_cluster_size)
    clusters = select_clusters_eom(tree)
    labels, probs = _label_points(tree, clusters)
    return ClusterLabels(labels, probs, float(np.sum(edges[:, 2])))
