"""Object co-occurrence matrices and symmetric GloVe embeddings.

Visual co-occurrence is unordered, so word and context roles are tied:
one embedding v_i and one bias b_i per label. The objective sums
f(X_ij) * (v_i . v_j + b_i + b_j - log X_ij)^2 over ordered pairs with a
positive count, with f(x) = min(1, (x / x_max)^alpha).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .seeds import rng_for

#: AdaGrad accumulators start at 1, following the original GloVe trainer,
#: so the first steps behave like plain gradient descent.
ADAGRAD_INIT = 1.0


@dataclass(frozen=True)
class CoocMatrix:
    """Symmetric non-negative co-occurrence counts with a zero diagonal."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        counts = np.asarray(self.counts, dtype=np.float64)
        object.__setattr__(self, "counts", counts)
        n = len(labels)
        if counts.shape != (n, n):
            raise ValueError(f"counts shape {counts.shape} does not match {n} labels")
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        if not np.array_equal(counts, counts.T):
            raise ValueError("counts must be symmetric")
        if np.any(np.diag(counts) != 0):
            raise ValueError("diagonal must be zero")

    @property
    def n_labels(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class GloveConfig:
    dim: int = 128
    alpha: float = 0.75
    x_max_quantile: float = 0.9
    learning_rate: float = 0.05
    epochs: int = 200
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise ValueError("dim must be > 0")
        if not 0.0 < self.x_max_quantile <= 1.0:
            raise ValueError("x_max_quantile must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass(frozen=True)
class GloveModel:
    """Tied embeddings and biases, one row per label."""

    embeddings: np.ndarray
    biases: np.ndarray

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.embeddings)) and np.all(np.isfinite(self.biases))):
            raise ValueError("model parameters must be finite")
        if self.embeddings.shape[0] != self.biases.shape[0]:
            raise ValueError("embeddings and biases must have one row per label")


def build_cooc(annotations: Iterable[Iterable[str]], vocabulary: Sequence[str]) -> CoocMatrix:
    """Count how often two distinct labels appear in the same image.

    Label multiplicity within an image is ignored (set semantics); every
    unordered pair present increments both symmetric cells by one.
    """
    index = {label: i for i, label in enumerate(vocabulary)}
    if len(index) != len(vocabulary):
        raise ValueError("vocabulary contains duplicate labels")
    n = len(vocabulary)
    counts = np.zeros((n, n))
    for image_labels in annotations:
        unique = set(image_labels)
        unknown = unique - index.keys()
        if unknown:
            raise ValueError(f"labels not in vocabulary: {sorted(unknown)}")
        ids = sorted(index[label] for label in unique)
        for a_pos, i in enumerate(ids):
            for j in ids[a_pos + 1 :]:
                counts[i, j] += 1.0
                counts[j, i] += 1.0
    return CoocMatrix(labels=tuple(vocabulary), counts=counts)


def glove_weight(x: float, x_max: float, alpha: float) -> float:
    """Weighting f(x) = min(1, (x / x_max)^alpha), downweighting rare pairs
    smoothly and capping frequent ones at 1."""
    if x < 0:
        raise ValueError("count must be >= 0")
    if x_max <= 0:
        raise ValueError("x_max must be > 0")
    return min(1.0, (x / x_max) ** alpha)


def resolve_x_max(matrix: CoocMatrix, quantile: float) -> float:
    """Empirical quantile of the positive counts (linear interpolation)."""
    positive = matrix.counts[matrix.counts > 0]
    if positive.size == 0:
        raise ValueError("co-occurrence matrix has no positive entries")
    return float(np.quantile(positive, quantile))


def glove_loss_grad(
    model: GloveModel, matrix: CoocMatrix, cfg: GloveConfig
) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective value and exact gradients for the tied model.

    Zero-count pairs are excluded (their log is undefined). Each unordered
    pair contributes twice, once per orientation, and the tied parameters
    accumulate gradient from both roles.
    """
    if model.embeddings.shape[0] != matrix.n_labels:
        raise ValueError("model size does not match matrix labels")
    x_max = resolve_x_max(matrix, cfg.x_max_quantile)
    counts = matrix.counts
    mask = counts > 0
    weights = np.zeros_like(counts)
    weights[mask] = np.minimum(1.0, (counts[mask] / x_max) ** cfg.alpha)

    emb, bias = model.embeddings, model.biases
    predicted = emb @ emb.T + bias[:, None] + bias[None, :]
    residual = np.zeros_like(counts)
    residual[mask] = predicted[mask] - np.log(counts[mask])
    loss = float(np.sum(weights * residual**2))

    common = 4.0 * weights * residual
    grad_emb = common @ emb
    grad_bias = common.sum(axis=1)
    return loss, grad_emb, grad_bias


def train_glove(matrix: CoocMatrix, cfg: GloveConfig) -> GloveModel:
    """Full-batch AdaGrad descent on the tied objective, deterministic per seed."""
    n, dim = matrix.n_labels, cfg.dim
    rng = rng_for(cfg.seed, "glove-init")
    scale = 0.5 / dim
    embeddings = rng.uniform(-scale, scale, size=(n, dim))
    biases = rng.uniform(-scale, scale, size=n)
    model = GloveModel(embeddings=embeddings, biases=biases)

    accum_emb = np.full((n, dim), ADAGRAD_INIT)
    accum_bias = np.full(n, ADAGRAD_INIT)
    for _ in range(cfg.epochs):
        _, grad_emb, grad_bias = glove_loss_grad(model, matrix, cfg)
        accum_emb += grad_emb**2
        accum_bias += grad_bias**2
        model = GloveModel(
            embeddings=model.embeddings - cfg.learning_rate * grad_emb / np.sqrt(accum_emb),
            biases=model.biases - cfg.learning_rate * grad_bias / np.sqrt(accum_bias),
        )
    return model


def validate_glove(model: GloveModel, matrix_test: CoocMatrix) -> float:
    """Pearson correlation of v_i.v_j + b_i + b_j with log test counts.

    Computed over unordered positive test pairs. Returns NaN when either
    side has zero variance, where the correlation is undefined.
    """
    if model.embeddings.shape[0] != matrix_test.n_labels:
        raise ValueError("model size does not match matrix labels")
    iu, ju = np.triu_indices(matrix_test.n_labels, k=1)
    positive = matrix_test.counts[iu, ju] > 0
    if positive.sum() < 2:
        raise ValueError("need at least 2 positive test entries")
    i, j = iu[positive], ju[positive]
    predicted = (
        np.sum(model.embeddings[i] * model.embeddings[j], axis=1)
        + model.biases[i]
        + model.biases[j]
    )
    target = np.log(matrix_test.counts[i, j])
    pred_sd = predicted.std()
    targ_sd = target.std()
    if pred_sd == 0 or targ_sd == 0:
        return math.nan
    cov = float(np.mean((predicted - predicted.mean()) * (target - target.mean())))
    return cov / float(pred_sd * targ_sd)


def write_cooc_csv(path: str | Path, matrix: CoocMatrix) -> None:
    """CSV with a label header row and a label first column."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", *matrix.labels])
        for label, row in zip(matrix.labels, matrix.counts):
            writer.writerow([label, *[repr(float(v)) for v in row]])


def read_cooc_csv(path: str | Path) -> CoocMatrix:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise ValueError(f"{path}: not a labeled co-occurrence CSV")
    labels = tuple(rows[0][1:])
    counts = np.zeros((len(labels), len(labels)))
    if len(rows) - 1 != len(labels):
        raise ValueError(f"{path}: expected {len(labels)} data rows, got {len(rows) - 1}")
    for r, row in enumerate(rows[1:]):
        if row[0] != labels[r]:
            raise ValueError(f"{path}: row label {row[0]!r} does not match column {labels[r]!r}")
        counts[r] = [float(v) for v in row[1:]]
    return CoocMatrix(labels=labels, counts=counts)


def read_annotations(path: str | Path) -> list[tuple[str, set[str]]]:
    """JSON-lines {image_id, labels: [...]} annotation reader."""
    import json

    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON") from exc
            out.append((str(rec["image_id"]), {str(x) for x in rec["labels"]}))
    return out


def write_annotations(path: str | Path, annotations: Sequence[tuple[str, set[str]]]) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        for image_id, labels in annotations:
            fh.write(json.dumps({"image_id": image_id, "labels": sorted(labels)}, sort_keys=True))
            fh.write("\n")
