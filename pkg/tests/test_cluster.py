import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from sklearn.cluster import HDBSCAN as SkHDBSCAN
from sklearn.metrics import adjusted_rand_score

from mshtm.cluster import (
    NOISE,
    HdbscanConfig,
    condense_tree,
    hdbscan,
    minimum_spanning_tree,
    mutual_reachability,
    reduce,
    select_clusters_eom,
    single_linkage,
)
from mshtm.embedder import EmbeddingMatrix
from mshtm.errors import ConfigurationError, DimensionError

from oracles import core_distances, euclid, mst_weight_kruskal


def blobs(seed, k, n=200, sigma=0.1, spacing=10.0, dim=2):
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(k, dim))
    centers *= spacing / np.linalg.norm(centers[0] - centers[1]) if k > 1 else 1.0
    labels = rng.integers(k, size=n)
    return centers[labels] + rng.normal(scale=sigma, size=(n, dim)), labels


def reference_labels(X, mcs, min_samples=None):
    # the reference counts a point as its own first neighbour
    k = (min_samples or mcs) + 1
    return SkHDBSCAN(min_cluster_size=mcs, min_samples=k).fit(X).labels_


def assert_valid(labels, mcs):
    ids = sorted(set(labels.tolist()) - {NOISE})
    assert ids == list(range(len(ids)))
    for c in ids:
        assert np.count_nonzero(labels == c) >= mcs


def test_reduce_none_is_identity():
    E = np.random.default_rng(0).normal(size=(10, 6))
    R = reduce(EmbeddingMatrix(E, "t"), method="none")
    assert np.array_equal(R.values, E) and R.method_tag == "none"


def test_reduce_rank_two_reconstructs():
    rng = np.random.default_rng(1)
    E = rng.normal(size=(100, 2)) @ rng.normal(size=(2, 40)) + rng.normal(size=40)
    R = reduce(E, dim=2)
    Ec = E - E.mean(axis=0)
    # least-squares back-projection from the two retained coordinates
    B, *_ = np.linalg.lstsq(R.values, Ec, rcond=None)
    assert np.linalg.norm(Ec - R.values @ B) / np.linalg.norm(Ec) < 1e-6


def test_reduce_variance_ordering_on_384_dims():
    E = np.random.default_rng(2).normal(size=(300, 384)) * np.linspace(3, 1, 384)
    R = reduce(E, dim=5)
    var = R.values.var(axis=0)
    assert np.all(np.diff(var) <= 1e-12)
    assert R.dim == 5 and len(R) == 300 and np.isfinite(R.values).all()
    np.testing.assert_allclose(var, R.explained_variance, rtol=1e-9)


def test_reduce_sign_convention_deterministic():
    E = np.random.default_rng(3).normal(size=(50, 8))
    a, b = reduce(E, 3).values, reduce(-E, 3).values
    np.testing.assert_allclose(a, -b, atol=1e-12)


def test_reduce_errors():
    with pytest.raises(DimensionError):
        reduce(np.ones((4, 3)), dim=4)
    with pytest.raises(ConfigurationError):
        reduce(np.ones((4, 3)), dim=2, method="umap")


def test_mutual_reachability_two_points():
    mr = mutual_reachability(np.array([[0.0, 0.0], [3.0, 4.0]]), 1)
    assert mr(0, 1) == 5.0 and mr.core.tolist() == [5.0, 5.0]


def test_mutual_reachability_collinear_three():
    mr = mutual_reachability(np.array([[0.0], [1.0], [10.0]]), 2)
    assert mr.core.tolist() == [10.0, 9.0, 10.0]
    assert mr(0, 1) == 10.0


def test_mutual_reachability_too_few_points():
    with pytest.raises(DimensionError):
        mutual_reachability(np.zeros((3, 2)), 3)


@given(hnp.arrays(np.float64, st.tuples(st.integers(3, 12), st.integers(1, 3)), elements=st.floats(-5, 5)), st.integers(1, 2))
def test_mutual_reachability_matches_oracle(X, k):
    pts = X.tolist()
    core = core_distances(pts, k, euclid)
    M = mutual_reachability(X, k).matrix()
    for i in range(len(pts)):
        for j in range(len(pts)):
            if i != j:
                expected = max(core[i], core[j], euclid(pts[i], pts[j]))
                assert M[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_cosine_metric_is_half_chord_squared():
    X = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0], [3.0, 0.1]])
    mr = mutual_reachability(X, 1, "cosine")
    d = mr.distance_row(0)
    assert d[1] == pytest.approx(1.0) and d[2] == pytest.approx(1 - 1 / math.sqrt(2))


@pytest.mark.parametrize("n", [5, 40, 120, 200])
def test_mst_weight_matches_kruskal(n):
    X = np.random.default_rng(n).normal(size=(n, 3))
    k = 4
    edges = minimum_spanning_tree(mutual_reachability(X, k))
    total, weights = mst_weight_kruskal(X.tolist(), k)
    assert sorted(edges[:, 2].tolist()) == weights
    assert math.fsum(edges[:, 2]) == total


def test_mst_tie_break_lower_index_first():
    # a unit square: every candidate edge from point 0 weighs the same
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    edges = minimum_spanning_tree(mutual_reachability(X, 1))
    assert edges[:, :2].astype(int).tolist() == [[0, 1], [0, 2], [1, 3]]


def test_two_blobs_match_reference():
    X, truth = blobs(0, 2)
    got = hdbscan(X, HdbscanConfig(min_cluster_size=10))
    assert got.n_clusters == 2 and got.noise_fraction <= 0.05
    assert adjusted_rand_score(reference_labels(X, 10), got.labels) >= 0.95
    assert adjusted_rand_score(truth, got.labels) >= 0.95


def test_identical_points_one_cluster():
    got = hdbscan(np.ones((30, 4)), HdbscanConfig(min_cluster_size=5))
    assert got.labels.tolist() == [0] * 30


def test_sparse_uniform_points_valid_labels():
    X = np.random.default_rng(4).uniform(size=(30, 2))
    got = hdbscan(X, HdbscanConfig(min_cluster_size=25))
    assert_valid(got.labels, 25)
    assert got.n_clusters <= 1


def test_too_few_points():
    with pytest.raises(DimensionError):
        hdbscan(np.zeros((4, 2)), HdbscanConfig(min_cluster_size=5))


@pytest.mark.parametrize("kwargs", [{"min_cluster_size": 1}, {"min_samples": 0}, {"min_cluster_size": 5, "min_samples": 6}, {"metric": "manhattan"}])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        HdbscanConfig(**kwargs)


@pytest.mark.parametrize("seed", range(4))
def test_permutation_gives_same_partition(seed):
    X, _ = blobs(seed, 3, n=150, sigma=0.6, spacing=4.0)
    perm = np.random.default_rng(seed).permutation(len(X))
    a = hdbscan(X, HdbscanConfig(min_cluster_size=8)).labels
    b = hdbscan(X[perm], HdbscanConfig(min_cluster_size=8)).labels
    assert adjusted_rand_score(a[perm], b) == 1.0
    assert_valid(a, 8)


@given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 4))
def test_label_invariants(seed, mcs, ms):
    X, _ = blobs(seed, 3, n=90, sigma=1.0, spacing=5.0)
    cfg = HdbscanConfig(min_cluster_size=mcs, min_samples=min(ms, mcs))
    out = hdbscan(X, cfg)
    assert_valid(out.labels, mcs)
    assert np.all((out.probabilities >= 0) & (out.probabilities <= 1))
    assert np.all(out.probabilities[out.labels == NOISE] == 0)


def test_condensed_tree_and_selection_pieces():
    X, _ = blobs(5, 2, n=60)
    edges = minimum_spanning_tree(mutual_reachability(X, 5))
    Z = single_linkage(edges, 60)
    assert np.all(np.diff(Z[:, 2]) >= 0) and Z[-1, 3] == 60
    tree = condense_tree(Z, 60, 5)
    chosen = select_clusters_eom(tree)
    assert len(chosen) == 2
    assert select_clusters_eom(tree, allow_single_cluster=True)


def test_cosine_metric_clusters_directions():
    rng = np.random.default_rng(6)
    a = np.array([1.0, 0.0, 0.0]) + rng.normal(scale=0.02, size=(40, 3))
    b = np.array([0.0, 1.0, 0.0]) + rng.normal(scale=0.02, size=(40, 3))
    X = np.vstack([a * rng.uniform(1, 5, size=(40, 1)), b * rng.uniform(1, 5, size=(40, 1))])
    out = hdbscan(X, HdbscanConfig(min_cluster_size=10, metric="cosine"))
    assert adjusted_rand_score([0] * 40 + [1] * 40, out.labels) >= 0.95


@pytest.mark.parametrize("seed", range(5))
def test_equal_height_merges_do_not_depend_on_order(seed):
    # three lattice groups equally far apart: every inter-group merge ties
    block = np.array([[i, j] for i in range(4) for j in range(3)], dtype=float)
    X = np.vstack([block + off for off in ([0, 0], [20, 0], [10, 10 * math.sqrt(3)])])
    X = np.round(X, 0)
    perm = np.random.default_rng(seed).permutation(len(X))
    a = hdbscan(X, HdbscanConfig(min_cluster_size=6)).labels
    b = hdbscan(X[perm], HdbscanConfig(min_cluster_size=6)).labels
    assert adjusted_rand_score(a[perm], b) == 1.0
