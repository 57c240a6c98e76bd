import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import balanced_accuracy_score, rand_score, silhouette_score

from fedgwc.errors import DomainError, ShapeError
from fedgwc.metrics import (
    balanced_accuracy,
    federation_balanced_accuracy,
    pairwise_wasserstein,
    rand_index,
    silhouette_from_distances,
    wadb_score,
    was_score,
    wasserstein_distance,
)

hists = st.integers(2, 8).flatmap(
    lambda C: st.tuples(*[st.lists(st.floats(0, 1), min_size=C, max_size=C) for _ in range(3)])
)


def normalize(h):
    h = np.asarray(h, dtype=float) + 1e-9
    return h / h.sum()


def test_permuted_histogram_has_zero_distance():
    h = np.array([0.5, 0.3, 0.2, 0.0])
    assert wasserstein_distance(h, h[[3, 1, 0, 2]]) == 0.0


def test_hand_value():
    assert wasserstein_distance([1, 0, 0], [1 / 3, 1 / 3, 1 / 3]) == pytest.approx(np.sqrt(2 / 9), rel=1e-14)


@given(hists)
def test_metric_axioms(triple):
    a, b, c = (normalize(h) for h in triple)
    d = wasserstein_distance
    assert d(a, a) == 0.0
    assert d(a, b) == d(b, a)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-12


def test_distance_errors():
    with pytest.raises(ShapeError):
        wasserstein_distance([1, 0], [1, 0, 0])
    with pytest.raises(DomainError):
        wasserstein_distance([1, 0], [0, 1], p=0)


def test_pairwise_matches_scalar():
    rng = np.random.default_rng(0)
    H = rng.dirichlet(np.ones(5), size=6)
    D = pairwise_wasserstein(H)
    for i in range(6):
        for j in range(6):
            assert D[i, j] == pytest.approx(wasserstein_distance(H[i], H[j]), rel=1e-13, abs=1e-15)


def test_silhouette_matches_sklearn():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(25, 3))
    labels = rng.integers(0, 3, 25)
    D = np.linalg.norm(X[:, None] - X[None], axis=2)
    assert silhouette_from_distances(D, labels) == pytest.approx(
        silhouette_score(D, labels, metric="precomputed"), rel=1e-12)


def test_was_separated_one_hot_vs_uniform_scores_one():
    H = [[1, 0, 0], [0, 1, 0], [0, 0, 1], [1 / 3] * 3, [1 / 3] * 3]
    assert was_score(H, [0, 0, 0, 1, 1]) == 1.0


def test_identical_histograms_score_zero():
    H = [[0.5, 0.5]] * 4
    assert was_score(H, [0, 0, 1, 1]) == 0.0


def test_random_split_of_one_population_has_wadb_above_one():
    rng = np.random.default_rng(2)
    H = rng.dirichlet(np.ones(10), size=60)
    labels = rng.permutation(np.repeat([0, 1], 30))
    assert wadb_score(H, labels) > 1.0


def test_scores_ignore_class_relabeling():
    rng = np.random.default_rng(3)
    H = rng.dirichlet(np.full(6, 0.3), size=20)
    labels = np.repeat([0, 1], 10)
    Hp = H[:, rng.permutation(6)]
    assert was_score(H, labels) == was_score(Hp, labels)
    assert wadb_score(H, labels) == wadb_score(Hp, labels)


def test_dict_inputs():
    H = {"a": [1, 0], "b": [1, 0], "c": [0.5, 0.5], "d": [0.5, 0.5]}
    L = {"d": 1, "c": 1, "b": 0, "a": 0}
    assert was_score(H, L) == 1.0
    with pytest.raises(ShapeError):
        was_score([[1, 0]] * 3, [0, 1])


def test_rand_index_examples():
    assert rand_index([0, 0, 1, 1], [5, 5, 9, 9]) == 1.0
    assert rand_index([0, 0, 1, 1], [0, 1, 0, 1]) == pytest.approx(2 / 6)
    assert rand_index([0, 0, 0, 0], [0, 1, 2, 3]) == 0.0
    assert rand_index({1: 0, 2: 0}, {2: 3, 1: 3}) == 1.0
    assert rand_index([0], [1]) == 1.0
    with pytest.raises(ShapeError):
        rand_index([0, 1], [0])
    with pytest.raises(ShapeError):
        rand_index({1: 0}, {2: 0})


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=30))
@settings(max_examples=100)
def test_rand_index_matches_sklearn(pairs):
    a, b = zip(*pairs)
    assert rand_index(a, b) == pytest.approx(rand_score(a, b), rel=1e-12)


def test_balanced_accuracy_examples():
    y = np.array([0, 0, 1, 1, 2, 2])
    assert balanced_accuracy(y, y) == 1.0
    assert balanced_accuracy([0, 0, 0, 0], [0, 0, 1, 1]) == 0.5
    # per-class recalls 1, 0.5, 0
    assert balanced_accuracy([0, 0, 1, 0, 0, 1], y) == pytest.approx(0.5)
    with pytest.raises(ShapeError):
        balanced_accuracy([0], [0, 1])
    with pytest.raises(DomainError):
        balanced_accuracy([0, 3], [0, 3], C=3)


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=50))
@settings(max_examples=100)
def test_balanced_accuracy_matches_sklearn(pairs):
    pred, true = map(np.array, zip(*pairs))
    # sklearn averages over classes present in y_true as well
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        want = balanced_accuracy_score(true, pred)
    assert balanced_accuracy(pred, true) == pytest.approx(want, rel=1e-12)


def test_federation_mean():
    assert federation_balanced_accuracy({0: 0.5, 1: 1.0}) == 0.75
    assert federation_balanced_accuracy([0.2, 0.4]) == pytest.approx(0.3)
