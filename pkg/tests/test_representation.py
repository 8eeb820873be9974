import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mshtm.errors import ConfigurationError
from mshtm.representation import (
    ClusterTermScores,
    average_linkage,
    cosine_distances,
    ctfidf,
    top_word_scores,
    top_words,
    topic_linkage,
    write_top_words_csv,
)
from mshtm.vectorizer import Vocabulary, VectorizerConfig, build_vocabulary

from oracles import average_linkage_heights, ctfidf_oracle, tokens

WORDS = ["amber", "basil", "cedar", "delta", "ember", "fjord", "grove", "heron"]


def vocab_of(terms):
    return Vocabulary(tuple(sorted(terms)), np.ones(len(terms)), 1, VectorizerConfig())


def scores_from(matrix, terms):
    matrix = np.asarray(matrix, dtype=float)
    ids = tuple(range(matrix.shape[0]))
    return ClusterTermScores(ids, matrix, matrix, (1,) * len(ids), 1.0, tuple(terms))


def test_hand_anchor():
    docs = {0: "x " * 4 + "a " * 16, 1: "x " * 4 + "b " * 16}
    s = ctfidf(docs, vocab_of(["a", "b", "x"]))
    assert s.avg_words == 20
    assert s.row(0)[2] == pytest.approx(4 * math.log(3.5), rel=1e-12)
    assert s.row(0)[2] == pytest.approx(5.0110, abs=1e-4)


def test_absent_term_scores_zero():
    s = ctfidf({0: "a a b", 1: "c"}, vocab_of(["a", "b", "c"]))
    assert s.row(1)[0] == 0 and s.row(0)[2] == 0


def test_noise_is_excluded():
    s = ctfidf({-1: "a a a", 0: "a b", 1: "c"}, vocab_of(["a", "b", "c"]))
    assert s.cluster_ids == (0, 1)
    assert s.counts.sum() == 3


def test_member_lists_record_size():
    s = ctfidf({0: ["a b", "b"], 1: ["c"]}, vocab_of(["a", "b", "c"]))
    assert s.sizes == (2, 1)
    assert s.counts[0].tolist() == [1, 2, 0]


def test_errors():
    with pytest.raises(ConfigurationError):
        ctfidf({0: "a"}, vocab_of([]))
    with pytest.raises(ConfigurationError):
        ctfidf({-1: "a"}, vocab_of(["a"]))
    with pytest.raises(ConfigurationError):
        top_words(scores_from([[1.0]], ["a"]), 0)


clusterings = st.dictionaries(
    st.integers(0, 5),
    st.lists(st.lists(st.sampled_from(WORDS), min_size=1, max_size=8).map(" ".join), min_size=1, max_size=4),
    min_size=1,
    max_size=5,
)


@given(clusterings)
def test_matches_counting_oracle(clusters):
    texts = [t for ts in clusters.values() for t in ts]
    vocab = build_vocabulary(texts)
    got = ctfidf(clusters, vocab)
    expected = ctfidf_oracle(clusters, set(vocab.terms))
    for c in clusters:
        row = got.row(c)
        for t, v in expected[c].items():
            assert row[vocab.term_index[t]] == pytest.approx(v, rel=1e-9, abs=1e-12)


@given(clusterings, st.randoms(use_true_random=False))
def test_relabeling_permutes_rows(clusters, rnd):
    vocab = build_vocabulary([t for ts in clusters.values() for t in ts])
    ids = sorted(clusters)
    new_ids = ids[:]
    rnd.shuffle(new_ids)
    mapping = dict(zip(ids, new_ids))
    a = ctfidf(clusters, vocab)
    b = ctfidf({mapping[c]: v for c, v in clusters.items()}, vocab)
    for c in ids:
        np.testing.assert_array_equal(a.row(c), b.row(mapping[c]))


@given(clusterings)
def test_duplicating_documents_doubles_scores(clusters):
    vocab = build_vocabulary([t for ts in clusters.values() for t in ts])
    a = ctfidf(clusters, vocab)
    b = ctfidf({c: ts + ts for c, ts in clusters.items()}, vocab)
    np.testing.assert_allclose(b.scores, 2 * a.scores, rtol=1e-12)
    for c in clusters:
        assert top_words(a, 5)[c] == top_words(b, 5)[c]


def test_top_words_single_term_and_tie_break():
    assert top_words(scores_from([[0, 3.0, 0]], ["a", "b", "c"]), 5) == {0: ["b"]}
    assert top_words(scores_from([[2.0, 2.0]], ["beta", "alpha"]), 2) == {0: ["alpha", "beta"]}


@given(st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.5, 2.0, 3.25]), min_size=len(WORDS), max_size=len(WORDS)), st.integers(1, 10))
def test_top_words_match_sort_oracle(row, n):
    got = top_word_scores(scores_from([row], WORDS), n)[0]
    expected = sorted(((w, v) for w, v in zip(WORDS, row) if v > 0), key=lambda p: (-p[1], p[0]))[:n]
    assert got == expected


def test_cosine_distances_basics():
    D = cosine_distances(np.array([[1.0, 0], [2.0, 0], [0, 1.0], [0, 0]]))
    assert D[0, 1] == 0 and D[0, 2] == 1 and D[0, 3] == 1 and D[3, 3] == 0
    assert np.array_equal(D, D.T)


def test_linkage_identical_vectors_merge_at_zero():
    lk = topic_linkage(scores_from([[1, 2, 3], [1, 2, 3]], "abc"))
    assert lk.merges.tolist() == [[0, 1, 0.0, 2]]


def test_linkage_identical_pair_then_orthogonal():
    lk = topic_linkage(scores_from([[1, 1, 0], [2, 2, 0], [0, 0, 5]], "abc"))
    assert lk.merges.tolist() == [[0, 1, 0.0, 2], [2, 3, 1.0, 3]]


def test_linkage_single_cluster_is_degenerate():
    lk = topic_linkage(scores_from([[1, 2]], "ab"))
    assert lk.leaves == (0,) and lk.merges.shape == (0, 4)


@given(st.integers(0, 2**32 - 1))
def test_linkage_matches_upgma_oracle(seed):
    V = np.random.default_rng(seed).exponential(size=(5, 6))
    V[V < 0.5] = 0
    merges = average_linkage(cosine_distances(V))
    expected = average_linkage_heights(V.tolist())
    np.testing.assert_allclose(merges[:, 2], expected, atol=1e-12)
    assert np.all((merges[:, 2] >= 0) & (merges[:, 2] <= 1))
    assert np.all(np.diff(merges[:, 2]) >= 0)
    assert merges[-1, 3] == 5


def test_linkage_matches_scipy_layout():
    from scipy.cluster.hierarchy import linkage
    from scipy.spatial.distance import squareform

    V = np.random.default_rng(3).exponential(size=(7, 4))
    D = cosine_distances(V)
    ours = average_linkage(D)
    ref = linkage(squareform(D, checks=False), method="average")
    np.testing.assert_allclose(ours[:, 2], ref[:, 2], atol=1e-12)
    np.testing.assert_array_equal(ours[:, 3], ref[:, 3])


def test_write_top_words_csv(tmp_path):
    path = tmp_path / "top.csv"
    write_top_words_csv(path, {"Topic 0": ["a", "b"], "Topic 1": ["c"]}, n_rows=3)
    rows = list(csv.reader(open(path, encoding="utf-8")))
    assert rows == [["Topic 0", "Topic 1"], ["a", "c"], ["b", ""], ["", ""]]


def test_oracle_tokenizer_agrees_with_vectorizer():
    text = "Émigré's 3000 ships, left!"
    assert VectorizerConfig().analyze(text) == tokens(text)
