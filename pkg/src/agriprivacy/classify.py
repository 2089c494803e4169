"""Binary classifiers used to score the utility of noisy projections."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOGISTIC = "logistic"
NAIVE_BAYES = "gaussian-naive-bayes"
LINEAR_SVM = "linear-svm"
KINDS = (LOGISTIC, NAIVE_BAYES, LINEAR_SVM)

VARIANCE_FLOOR = 1e-9


class ClassifierError(ValueError):
    pass


@dataclass
class Hyperparameters:
    l2: float = 1e-3
    learning_rate: float = 0.1
    epochs: int = 500
    grad_tol: float = 1e-6
    variance_floor: float = VARIANCE_FLOOR

    def __post_init__(self):
        for name in ("l2", "learning_rate", "grad_tol", "variance_floor"):
            if getattr(self, name) <= 0:
                raise ClassifierError(f"{name} must be positive")
        if self.epochs < 1:
            raise ClassifierError("epochs must be >= 1")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ClassifierError("features must be n x r with one label per row")
        if not np.all(np.isfinite(x)):
            raise ClassifierError("non-finite features")
        if not np.all((y == 0) | (y == 1)):
            raise ClassifierError("labels must be 0 or 1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y.astype(int))


@dataclass(frozen=True, eq=False)
class ClassifierModel:
    kind: str
    parameters: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        if self.kind == NAIVE_BAYES:
            return self.parameters["means"].shape[1]
        return self.parameters["weights"].shape[0]


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def logistic_objective(weights, bias, x, y, l2):
    """Mean log loss plus ``l2/2 * |w|^2``; labels in {0, 1}."""
    z = x @ weights + bias
    # log(1 + e^z) - y z, written to avoid overflow
    loss = np.logaddexp(0.0, z) - y * z
    return float(loss.mean() + 0.5 * l2 * weights @ weights)


def logistic_gradient(weights, bias, x, y, l2):
    p = _sigmoid(x @ weights + bias)
    err = (p - y) / x.shape[0]
    return x.T @ err + l2 * weights, float(err.sum())


def hinge_objective(weights, bias, x, y, l2):
    """Mean hinge loss plus ``l2/2 * |w|^2``; labels in {0, 1} mapped to ±1."""
    t = 2.0 * y - 1.0
    margin = 1.0 - t * (x @ weights + bias)
    return float(np.maximum(margin, 0.0).mean() + 0.5 * l2 * weights @ weights)


def hinge_subgradient(weights, bias, x, y, l2):
    t = 2.0 * y - 1.0
    active = (1.0 - t * (x @ weights + bias)) > 0
    coef = -(t * active) / x.shape[0]
    return x.T @ coef + l2 * weights, float(coef.sum())


def _fit_linear(x, y, hyper: Hyperparameters, grad_fn):
    w = np.zeros(x.shape[1])
    b = 0.0
    for epoch in range(1, hyper.epochs + 1):
        gw, gb = grad_fn(w, b, x, y, hyper.l2)
        if np.sqrt(gw @ gw + gb * gb) < hyper.grad_tol:
            break
        step = hyper.learning_rate / np.sqrt(epoch)
        w = w - step * gw
        b = b - step * gb
    return w, b


def _fit_naive_bayes(x, y, floor):
    classes = np.array([0, 1])
    means = np.array([x[y == c].mean(axis=0) for c in classes])
    variances = np.array([np.maximum(x[y == c].var(axis=0), floor) for c in classes])
    priors = np.array([np.mean(y == c) for c in classes])
    return {"means": means, "variances": variances, "priors": priors}


def train(kind: str, data: LabeledDataset, hyper: Hyperparameters | None = None, seed: int = 0) -> ClassifierModel:
    """Fit one of the three classifier kinds.

    All three fits are full-batch and deterministic; ``seed`` is accepted for
    interface symmetry and currently consumes no randomness.
    """
    hyper = hyper or Hyperparameters()
    if kind not in KINDS:
        raise ClassifierError(f"unknown classifier kind {kind!r}")
    x, y = data.features, data.labels
    if x.shape[0] < 2 or len(np.unique(y)) < 2:
        raise ClassifierError("training data must contain both classes")
    if kind == NAIVE_BAYES:
        return ClassifierModel(kind, _fit_naive_bayes(x, y, hyper.variance_floor))
    grad = logistic_gradient if kind == LOGISTIC else hinge_subgradient
    w, b = _fit_linear(x, y.astype(float), hyper, grad)
    if not (np.all(np.isfinite(w)) and np.isfinite(b)):
        raise ClassifierError("training diverged")
    return ClassifierModel(kind, {"weights": w, "bias": b})


def naive_bayes_posteriors(model: ClassifierModel, features) -> np.ndarray:
    p = model.parameters
    x = np.asarray(features, dtype=float)
    log_lik = -0.5 * np.sum(
        np.log(2 * np.pi * p["variances"])[None, :, :]
        + (x[:, None, :] - p["means"][None, :, :]) ** 2 / p["variances"][None, :, :],
        axis=2,
    )
    with np.errstate(divide="ignore"):
        log_post = log_lik + np.log(p["priors"])[None, :]
    log_post -= log_post.max(axis=1, keepdims=True)
    post = np.exp(log_post)
    return post / post.sum(axis=1, keepdims=True)


def decision_function(model: ClassifierModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    return x @ model.parameters["weights"] + model.parameters["bias"]


def predict(model: ClassifierModel, features) -> np.ndarray:
    """Hard labels; a score exactly on the boundary goes to class 1."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ClassifierError(f"feature dimension mismatch: model expects {model.dim}")
    if model.kind == NAIVE_BAYES:
        post = naive_bayes_posteriors(model, x)
        return (post[:, 1] >= post[:, 0]).astype(int)
    return (decision_function(model, x) >= 0).astype(int)


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ClassifierError(f"length mismatch: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ClassifierError("accuracy of an empty prediction is undefined")
    return float(np.mean(predicted == truth))
