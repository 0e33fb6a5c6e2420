import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mosaic.ensemble import PredictionMatrix, accuracy, build_ensemble, ensemble_predict


def test_single_candidate():
    preds = PredictionMatrix.from_labels([[0, 1, 1]], [0, 1, 0])
    w = build_ensemble(preds, 10)
    assert dict(w.weights) == {0: 1.0}


def test_dominating_model():
    targets = [0, 1, 2, 1, 0]
    preds = PredictionMatrix.from_labels([[2, 0, 0, 0, 1], targets], targets)
    w = build_ensemble(preds, 20)
    assert set(w.weights) == {1} and w.score == 1.0


def test_complementary_models():
    targets = np.array([0, 0, 1, 1])
    # model 0 right on the first half, model 1 on the second
    p0 = np.array([[0.9, 0.1], [0.9, 0.1], [0.6, 0.4], [0.6, 0.4]])
    p1 = np.array([[0.4, 0.6], [0.4, 0.6], [0.1, 0.9], [0.1, 0.9]])
    preds = PredictionMatrix(np.stack([p0, p1]), targets)
    w = build_ensemble(preds, 10)
    assert w.score >= max(accuracy(p0, targets), accuracy(p1, targets))
    assert w.score == 1.0
    assert set(w.weights) == {0, 1}


def test_weighted_average_example():
    probs = np.array([[[0.6, 0.4]], [[0.2, 0.8]]])
    assert list(ensemble_predict({0: 0.5, 1: 0.5}, probs)) == [1]


def test_identical_rows_and_single_weight():
    probs = np.array([[[0.7, 0.3], [0.1, 0.9]]] * 3)
    assert list(ensemble_predict({0: 1.0}, probs)) == [0, 1]
    assert list(ensemble_predict({0: 1 / 3, 1: 1 / 3, 2: 1 / 3}, probs)) == [0, 1]


def test_missing_row():
    with pytest.raises(KeyError):
        ensemble_predict({3: 1.0}, np.zeros((2, 1, 2)) + 0.5)


def test_empty_candidates_and_bad_rows():
    with pytest.raises(ValueError):
        build_ensemble(PredictionMatrix(np.zeros((0, 3, 2)), np.zeros(3, dtype=int)))
    with pytest.raises(ValueError):
        PredictionMatrix(np.full((1, 2, 2), 0.6), np.array([0, 1]))


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 8), n=st.integers(1, 30), k=st.integers(2, 4),
       size=st.integers(1, 20))
def test_never_worse_than_best_single(seed, m, n, k, size):
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.ones(k), size=(m, n))
    targets = rng.integers(0, k, n)
    w = build_ensemble(PredictionMatrix(probs, targets), size)
    best = max(accuracy(probs[i], targets) for i in range(m))
    assert w.score >= best
    assert abs(sum(w.weights.values()) - 1.0) <= 1e-12
    assert all(v > 0 for v in w.weights.values()) and set(w.weights) <= set(range(m))
    assert build_ensemble(PredictionMatrix(probs, targets), size) == w
