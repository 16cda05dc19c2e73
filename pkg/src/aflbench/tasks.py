"""Loss, gradient, and prediction functions for the two model families.

Linear regression uses squared loss f(theta, (u, y)) = (<u, theta> - y)^2 / 2.
Multinomial logistic regression stores its parameters as a single flat
vector, row-major by class, so every defense filter sees plain vectors.

Gradients returned here are mini-batch AVERAGES. The training engine owns
the wire-format scaling of updates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Curvature:
    """Smoothness L and strong convexity mu of the population risk."""

    smoothness: float
    strong_convexity: float

    def __post_init__(self):
        if not (0.0 < self.strong_convexity <= self.smoothness):
            raise ValueError("need 0 < mu <= L")


@dataclass(frozen=True)
class RegressionTask:
    dim: int
    true_model: np.ndarray | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.true_model is not None and self.true_model.shape != (self.dim,):
            raise ValueError("true_model length must equal dim")

    @property
    def param_dim(self) -> int:
        return self.dim

    # The synthetic linear regression problem has identity feature covariance,
    # so the population risk is exactly 1-smooth and 1-strongly convex.
    curvature = Curvature(smoothness=1.0, strong_convexity=1.0)


@dataclass(frozen=True)
class LogisticTask:
    dim: int
    num_classes: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")

    @property
    def param_dim(self) -> int:
        return self.dim * self.num_classes


def regression_gradient(theta: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Average gradient of the squared loss over a batch.

    features: (m, d) array, labels: (m,) array, m >= 1.
    """
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch must be a nonempty (m, d) array")
    if features.shape[1] != theta.shape[0]:
        raise ValueError(f"feature dim {features.shape[1]} != model dim {theta.shape[0]}")
    residual = features @ theta - labels
    return features.T @ residual / features.shape[0]


def regression_predict(theta: np.ndarray, features: np.ndarray) -> float:
    """Predicted value <features, theta> for a single example."""
    if features.shape != theta.shape:
        raise ValueError("dimension mismatch")
    return float(features @ theta)


def regression_predict_batch(theta: np.ndarray, features: np.ndarray) -> np.ndarray:
    if features.shape[1] != theta.shape[0]:
        raise ValueError("dimension mismatch")
    return features @ theta


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def logistic_gradient(
    params: np.ndarray, features: np.ndarray, labels: np.ndarray, num_classes: int
) -> np.ndarray:
    """Average softmax cross-entropy gradient, flattened row-major by class."""
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("batch must be a nonempty (m, d) array")
    m, d = features.shape
    if params.shape[0] != d * num_classes:
        raise ValueError(f"param length {params.shape[0]} != dim*C = {d * num_classes}")
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("class label out of range")
    weights = params.reshape(num_classes, d)
    probs = _softmax(features @ weights.T)
    probs[np.arange(m), labels.astype(int)] -= 1.0
    grad = probs.T @ features / m
    return grad.reshape(-1)


def logistic_scores(params: np.ndarray, features: np.ndarray, num_classes: int) -> np.ndarray:
    d = features.shape[-1]
    if params.shape[0] != d * num_classes:
        raise ValueError("dimension mismatch")
    weights = params.reshape(num_classes, d)
    return features @ weights.T


def logistic_predict(params: np.ndarray, features: np.ndarray, num_classes: int) -> int:
    """Argmax class; ties break toward the lowest class index."""
    scores = logistic_scores(params, features.reshape(1, -1), num_classes)
    return int(np.argmax(scores[0]))


def logistic_predict_batch(params: np.ndarray, features: np.ndarray, num_classes: int) -> np.ndarray:
    scores = logistic_scores(params, features, num_classes)
    return np.argmax(scores, axis=1)
