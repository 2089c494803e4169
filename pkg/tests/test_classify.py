import numpy as np
import pytest

from agriprivacy.classify import (
    KINDS,
    LINEAR_SVM,
    LOGISTIC,
    NAIVE_BAYES,
    ClassifierError,
    ClassifierModel,
    Hyperparameters,
    LabeledDataset,
    accuracy,
    decision_function,
    hinge_objective,
    hinge_subgradient,
    logistic_gradient,
    logistic_objective,
    predict,
    train,
)
from oracles import central_difference_gradient


def separable(seed=0, n=40):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal([-4, 0], 0.5, (n, 2)), rng.normal([4, 0], 0.5, (n, 2))])
    y = np.r_[np.zeros(n, int), np.ones(n, int)]
    return LabeledDataset(x, y)


@pytest.mark.parametrize("kind", KINDS)
def test_separable_training_accuracy(kind):
    data = separable()
    m = train(kind, data)
    assert accuracy(predict(m, data.features), data.labels) == 1.0


def test_naive_bayes_boundary_at_midpoint():
    rng = np.random.default_rng(3)
    x = np.r_[rng.normal(0, 1, 5000), rng.normal(4, 1, 5000)][:, None]
    y = np.r_[np.zeros(5000, int), np.ones(5000, int)]
    m = train(NAIVE_BAYES, LabeledDataset(x, y))
    grid = np.linspace(0, 4, 4001)[:, None]
    boundary = grid[np.argmax(predict(m, grid) == 1), 0]
    assert abs(boundary - 2.0) <= 0.2


def test_logistic_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 3))
    y = rng.integers(0, 2, 5)
    w, b = rng.standard_normal(3), 0.3
    gw, gb = logistic_gradient(w, b, x, y, 0.01)
    num = central_difference_gradient(lambda p: logistic_objective(p[:3], p[3], x, y, 0.01), np.r_[w, b])
    assert np.max(np.abs(np.r_[gw, gb] - num)) < 1e-6


def test_tie_goes_to_class_one():
    m = ClassifierModel(LOGISTIC, {"weights": np.array([1.0, -1.0]), "bias": 0.0})
    assert decision_function(m, np.array([[2.0, 2.0]])).tolist() == [0.0]
    assert predict(m, np.array([[2.0, 2.0]])).tolist() == [1]
    s = ClassifierModel(LINEAR_SVM, {"weights": np.array([1.0]), "bias": -1.0})
    assert predict(s, np.array([[1.0]])).tolist() == [1]


def test_naive_bayes_prior_decides_equal_likelihoods():
    m = ClassifierModel(NAIVE_BAYES, {
        "priors": np.array([0.9, 0.1]),
        "means": np.zeros((2, 1)),
        "variances": np.ones((2, 1)),
    })
    assert predict(m, np.array([[0.3]])).tolist() == [0]


def test_accuracy_examples():
    assert accuracy([0, 1, 1, 0], [0, 1, 1, 0]) == 1.0
    assert accuracy([0, 1, 1, 0], [1, 0, 0, 1]) == 0.0
    assert accuracy([0, 1, 1, 0], [0, 1, 1, 1]) == 0.75
    with pytest.raises(ClassifierError):
        accuracy([0, 1], [0])


def test_single_class_and_dimension_errors():
    with pytest.raises(ClassifierError):
        train(LOGISTIC, LabeledDataset(np.zeros((3, 1)), [1, 1, 1]))
    m = train(LOGISTIC, separable())
    with pytest.raises(ClassifierError):
        predict(m, np.zeros((2, 5)))
    with pytest.raises(ClassifierError):
        train("forest", separable())
    with pytest.raises(ClassifierError):
        LabeledDataset(np.zeros((2, 1)), [0, 2])


def test_training_is_deterministic():
    a = train(LINEAR_SVM, separable(4))
    b = train(LINEAR_SVM, separable(4))
    assert np.array_equal(a.parameters["weights"], b.parameters["weights"])


def test_constant_feature_naive_bayes_uses_variance_floor():
    x = np.column_stack([np.r_[np.zeros(5), np.ones(5)], np.full(10, 3.0)])
    y = np.r_[np.zeros(5, int), np.ones(5, int)]
    m = train(NAIVE_BAYES, LabeledDataset(x, y), Hyperparameters())
    assert np.all(m.parameters["variances"] >= 1e-9)
    assert accuracy(predict(m, x), y) == 1.0


def test_hinge_subgradient_matches_finite_differences_off_the_kinks():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 3))
    y = rng.integers(0, 2, 5)
    w, b = rng.standard_normal(3), -0.2
    margins = 1.0 - (2 * y - 1) * (x @ w + b)
    assert np.min(np.abs(margins)) > 1e-3
    gw, gb = hinge_subgradient(w, b, x, y, 0.01)
    num = central_difference_gradient(lambda p: hinge_objective(p[:3], p[3], x, y, 0.01), np.r_[w, b])
    assert np.max(np.abs(np.r_[gw, gb] - num)) < 1e-6
