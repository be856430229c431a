"""Multinomial logistic-regression probes on frozen features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeds import rng_for

#: Reference top-1 accuracies on normal images from large-scale runs of the
#: gaze-crop and full-frame pipelines; documentation constants only.
REFERENCE_NORMAL_ACC_GAZE_CROP = 0.80
REFERENCE_NORMAL_ACC_FULL_FRAME = 0.75


@dataclass(frozen=True)
class ProbeConfig:
    learning_rate: float = 0.5
    l2_reg: float = 1e-4
    epochs: int = 100
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")


@dataclass(frozen=True)
class ProbeModel:
    """Linear classifier: logits = features @ weights.T + bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("probe parameters must be finite")


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def probe_loss(model: ProbeModel, features: np.ndarray, labels: np.ndarray, l2_reg: float) -> float:
    """Mean softmax cross-entropy plus the L2 penalty on the weights."""
    logits = features @ model.weights.T + model.bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    ce = float(np.mean(lse - logits[np.arange(len(labels)), labels]))
    return ce + 0.5 * l2_reg * float(np.sum(model.weights**2))


def train_probe(features: np.ndarray, labels: np.ndarray, cfg: ProbeConfig) -> ProbeModel:
    """Fit the probe by mini-batch gradient descent on CE + L2.

    Shuffling per epoch is derived from (seed, epoch), so training for fewer
    epochs is a prefix of a longer run. Deterministic given the config.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[0] != labels.shape[0]:
        raise ValueError("features must be (n, d) with one label per row")
    classes = int(labels.max()) + 1 if labels.size else 0
    if len(np.unique(labels)) < 2:
        raise ValueError("probe training needs at least 2 distinct classes")
    if labels.min() < 0:
        raise ValueError("labels must be non-negative")
    n, dim = features.shape
    if n < classes:
        raise ValueError(f"need at least {classes} samples for {classes} classes")

    weights = np.zeros((classes, dim))
    bias = np.zeros(classes)
    onehot = np.eye(classes)[labels]
    for epoch in range(cfg.epochs):
        perm = rng_for(cfg.seed, "probe-epoch", epoch).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            batch, target = features[idx], onehot[idx]
            probs = _softmax(batch @ weights.T + bias)
            gap = (probs - target) / len(idx)
            grad_w = gap.T @ batch + cfg.l2_reg * weights
            grad_b = gap.sum(axis=0)
            weights = weights - cfg.learning_rate * grad_w
            bias = bias - cfg.learning_rate * grad_b
    return ProbeModel(weights=weights, bias=bias)


def evaluate(model: ProbeModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Top-1 accuracy; argmax ties resolve to the smallest class index."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or features.shape[1] != model.weights.shape[1]:
        raise ValueError("feature dimension does not match the probe")
    if features.shape[0] != labels.shape[0]:
        raise ValueError("one label per feature row required")
    predictions = np.argmax(features @ model.weights.T + model.bias, axis=1)
    return float(np.mean(predictions == labels))


def sensitivity_delta(
    acc_normal: float, acc_missing_background: float, acc_missing_object: float
) -> tuple[float, float]:
    """Accuracy deltas of ablated evaluations relative to normal images.

    Returns (background robustness, object reliance): accuracy with the
    background removed minus normal accuracy, and accuracy with the object
    removed minus normal accuracy. Both are typically <= 0; a higher value
    means more robustness to that removal.
    """
    for value in (acc_normal, acc_missing_background, acc_missing_object):
        if not 0.0 <= value <= 1.0:
            raise ValueError("accuracies must lie in [0, 1]")
    return acc_missing_background - acc_normal, acc_missing_object - acc_normal
