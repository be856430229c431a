"""Linear CKA between representation matrices and seed-paired statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np


@dataclass(frozen=True)
class RepMatrix:
    """Per-object feature rows; object order is part of the identity."""

    object_ids: tuple[str, ...]
    features: np.ndarray

    def __post_init__(self) -> None:
        ids = tuple(self.object_ids)
        object.__setattr__(self, "object_ids", ids)
        feats = np.asarray(self.features, dtype=np.float64)
        object.__setattr__(self, "features", feats)
        if len(ids) < 2:
            raise ValueError("need at least 2 objects")
        if feats.ndim != 2 or feats.shape[0] != len(ids):
            raise ValueError(f"features shape {feats.shape} does not match {len(ids)} objects")


@dataclass(frozen=True)
class SeedScores:
    """Paired per-seed scores of two conditions."""

    scores_a: tuple[float, ...]
    scores_b: tuple[float, ...]

    def __post_init__(self) -> None:
        a, b = tuple(self.scores_a), tuple(self.scores_b)
        object.__setattr__(self, "scores_a", a)
        object.__setattr__(self, "scores_b", b)
        if len(a) != len(b) or len(a) < 2:
            raise ValueError("paired score lists must have equal length >= 2")


class TTestResult(NamedTuple):
    t: float
    p: float
    cohens_d: float


def aggregate_object_reps(per_image_features: Mapping[str, Sequence[np.ndarray]]) -> RepMatrix:
    """Average the image vectors of each object into one row, objects sorted."""
    if not per_image_features:
        raise ValueError("no objects")
    object_ids = tuple(sorted(per_image_features))
    rows = []
    dim = None
    for obj in object_ids:
        vectors = [np.asarray(v, dtype=np.float64) for v in per_image_features[obj]]
        if not vectors:
            raise ValueError(f"object {obj!r} has no image vectors")
        for vec in vectors:
            if vec.ndim != 1:
                raise ValueError("image features must be 1-D vectors")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ValueError("image feature dimensions differ")
        rows.append(np.mean(vectors, axis=0))
    return RepMatrix(object_ids=object_ids, features=np.stack(rows))


def concat_layers(reps: Sequence[RepMatrix]) -> RepMatrix:
    """Horizontal concatenation of per-layer representations."""
    if not reps:
        raise ValueError("no representation matrices")
    ids = reps[0].object_ids
    for rep in reps[1:]:
        if rep.object_ids != ids:
            raise ValueError("object_id lists differ between layers")
    return RepMatrix(object_ids=ids, features=np.hstack([rep.features for rep in reps]))


def linear_cka(x: RepMatrix | np.ndarray, y: RepMatrix | np.ndarray) -> float:
    """Linear CKA in feature form.

    With column-centered Xc, Yc: ||Yc' Xc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F).
    Invariant to orthogonal transforms and isotropic scaling of either side.
    """
    xf = x.features if isinstance(x, RepMatrix) else np.asarray(x, dtype=np.float64)
    yf = y.features if isinstance(y, RepMatrix) else np.asarray(y, dtype=np.float64)
    if xf.ndim != 2 or yf.ndim != 2:
        raise ValueError("representations must be 2-D")
    if xf.shape[0] != yf.shape[0]:
        raise ValueError(f"row counts differ: {xf.shape[0]} vs {yf.shape[0]}")
    if xf.shape[0] < 2:
        raise ValueError("need at least 2 rows")
    xc = xf - xf.mean(axis=0, keepdims=True)
    yc = yf - yf.mean(axis=0, keepdims=True)
    norm_x = np.linalg.norm(xc.T @ xc)
    norm_y = np.linalg.norm(yc.T @ yc)
    if norm_x == 0 or norm_y == 0:
        raise ValueError("zero-variance representation matrix")
    return float(np.linalg.norm(yc.T @ xc) ** 2 / (norm_x * norm_y))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def reg_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) by continued-fraction series."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided p-value of a Student-t statistic."""
    if dof <= 0:
        raise ValueError("degrees of freedom must be > 0")
    if math.isinf(t):
        return 0.0
    return reg_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_t_test(scores: SeedScores) -> TTestResult:
    """Classical paired t-test over per-seed score differences.

    All-zero differences return (0, 1, 0), reading "no evidence of a
    difference". Identical nonzero differences (zero variance, nonzero
    mean) return signed infinities with p = 0.
    """
    diffs = np.asarray(scores.scores_a) - np.asarray(scores.scores_b)
    n = len(diffs)
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, cohens_d=0.0)
        sign = math.copysign(1.0, mean)
        return TTestResult(t=sign * math.inf, p=0.0, cohens_d=sign * math.inf)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=student_t_two_sided_p(t, n - 1), cohens_d=mean / sd)
