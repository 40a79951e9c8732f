"""Linear soft-margin SVM over gradient windows, trained per landmark.

Training minimizes 0.5*|w|^2 + C * sum(hinge) by seeded stochastic
subgradient descent on the bias-augmented problem, averaging the iterates
of the final half of epochs. Prediction is a plain signed hyperplane test;
ties classify +1 so boundary candidates stay in play.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassBalanceError, DimensionMismatchError, ShapeArityError
from .profiles import normalize_windows, windows_batch

RING_MIN_DEFAULT = 2
RING_MAX_DEFAULT = 8


@dataclass(frozen=True, eq=False)
class LinearSvmModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if not (np.all(np.isfinite(w)) and np.isfinite(self.bias)):
            raise ShapeArityError("SVM parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.weights.size


@dataclass(frozen=True, eq=False)
class FeatureScaler:
    """Per-dimension standardization fitted on training features."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).ravel()
        std = np.array(self.std, dtype=float).ravel()
        if mean.shape != std.shape:
            raise DimensionMismatchError("scaler mean/std length mismatch")
        if np.any(std <= 0):
            raise ShapeArityError("scaler std entries must be positive")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, rows: np.ndarray) -> "FeatureScaler":
        rows = np.asarray(rows, dtype=float)
        std = rows.std(axis=0)
        # Constant dimensions carry no signal; unit std leaves them at zero.
        std = np.where(std < 1e-12, 1.0, std)
        return cls(rows.mean(axis=0), std)

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (np.asarray(rows, dtype=float) - self.mean) / self.std


@dataclass(frozen=True)
class SvmTrainConfig:
    c_penalty: float = 1.0
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.c_penalty <= 0:
            raise ShapeArityError(f"c_penalty must be positive, got {self.c_penalty}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ShapeArityError("epochs and batch_size must be >= 1")


@dataclass(frozen=True, eq=False)
class LandmarkTrainingSet:
    """Feature rows and +/-1 labels for one landmark at one pyramid level."""

    features: np.ndarray
    labels: np.ndarray
    landmark: int
    level: int
    skipped: int = 0

    def __post_init__(self):
        feats = np.array(self.features, dtype=float)
        labels = np.array(self.labels, dtype=float).ravel()
        if feats.ndim != 2 or feats.shape[0] != labels.size:
            raise DimensionMismatchError(
                f"features {feats.shape} do not pair with {labels.size} labels"
            )
        if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ShapeArityError("labels must be +1 or -1")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def count(self) -> int:
        return self.labels.size


def _ring_offsets(d_min: int, d_max: int) -> np.ndarray:
    """Integer (dx, dy) offsets with Chebyshev norm in [d_min, d_max], row-major."""
    span = np.arange(-d_max, d_max + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    cheb = np.maximum(np.abs(dx), np.abs(dy))
    keep = (cheb >= d_min) & (cheb <= d_max)
    return np.column_stack([dx[keep], dy[keep]])


def build_landmark_training_set(
    dataset,
    landmark: int,
    level: int,
    negatives_per_positive: int = 4,
    offset_range=(RING_MIN_DEFAULT, RING_MAX_DEFAULT),
    seed: int = 0,
    size: int = 15,
    mode: str = "sum",
    q: float = 10.0,
) -> LandmarkTrainingSet:
    """Positive/negative gradient windows for one landmark at one level.

    `dataset` is a sequence of (gradient magnitude array, level-scaled
    (n, 2) landmark positions) pairs. Each image contributes one positive
    window at the annotated point and negatives_per_positive windows at
    distinct random offsets whose Chebyshev distance lies in offset_range.
    Annotated points falling outside the image at this level are skipped
    and counted.
    """
    d_min, d_max = int(offset_range[0]), int(offset_range[1])
    if d_min < 1 or d_max < d_min:
        raise ShapeArityError(f"offset range must satisfy 1 <= d_min <= d_max, got {offset_range}")
    ring = _ring_offsets(d_min, d_max)
    if negatives_per_positive > len(ring):
        raise ShapeArityError(
            f"ring [{d_min}, {d_max}] holds {len(ring)} offsets, "
            f"cannot draw {negatives_per_positive} without replacement"
        )
    rng = np.random.default_rng(seed)
    rows = []
    labels = []
    skipped = 0
    for magnitude, points in dataset:
        center = np.asarray(points, dtype=float)[landmark]
        h, w = magnitude.shape
        cx, cy = np.rint(center)
        if not (0 <= cx < w and 0 <= cy < h):
            skipped += 1
            continue
        pick = rng.choice(len(ring), size=negatives_per_positive, replace=False)
        centers = np.vstack([center[None, :], center[None, :] + ring[pick]])
        wins = normalize_windows(windows_batch(magnitude, centers, size), mode, q)
        rows.append(wins)
        labels.extend([1.0] + [-1.0] * negatives_per_positive)
    if not rows:
        return LandmarkTrainingSet(
            np.empty((0, size * size)), np.empty(0), landmark, level, skipped
        )
    return LandmarkTrainingSet(np.vstack(rows), np.array(labels), landmark, level, skipped)


def train_linear_svm(train_set: LandmarkTrainingSet, config: SvmTrainConfig) -> LinearSvmModel:
    """Seeded stochastic subgradient descent on the hinge objective.

    Works on bias-augmented features with regularization 1/(C*m), stepping
    eta_t = 1/(lambda*t); the returned model averages the epoch-final
    iterates of the last half of epochs for stability.
    """
    y = train_set.labels
    if y.size == 0 or np.all(y == y[0]):
        raise ClassBalanceError(
            f"landmark {train_set.landmark} level {train_set.level}: "
            "training set must contain both classes"
        )
    x = np.hstack([train_set.features, np.ones((train_set.count, 1))])
    m, d = x.shape
    lam = 1.0 / (config.c_penalty * m)
    rng = np.random.default_rng(config.seed)
    w = np.zeros(d)
    t = 0
    batch = min(config.batch_size, m)
    avg = np.zeros(d)
    averaged = 0
    for epoch in range(config.epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch):
            idx = order[start:start + batch]
            t += 1
            eta = 1.0 / (lam * t)
            margin = y[idx] * (x[idx] @ w)
            viol = margin < 1.0
            grad = lam * w - (y[idx][viol] @ x[idx][viol]) / idx.size
            w = w - eta * grad
        if epoch >= config.epochs // 2:
            avg += w
            averaged += 1
    w = avg / averaged
    return LinearSvmModel(w[:-1], float(w[-1]))


def predict(model: LinearSvmModel, values) -> tuple:
    """(label, decision value); decision >= 0 classifies +1."""
    g = np.asarray(getattr(values, "values", values), dtype=float).ravel()
    if g.size != model.dim:
        raise DimensionMismatchError(f"profile dim {g.size} vs SVM dim {model.dim}")
    decision = float(g @ model.weights + model.bias)
    return (1 if decision >= 0 else -1), decision


def decision_values(model: LinearSvmModel, rows: np.ndarray) -> np.ndarray:
    """Decision values for an (m, d) feature matrix."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != model.dim:
        raise DimensionMismatchError(f"profile dim {rows.shape[-1]} vs SVM dim {model.dim}")
    return rows @ model.weights + model.bias


def svm_objective(model: LinearSvmModel, train_set: LandmarkTrainingSet, c_penalty: float) -> float:
    """Primal objective 0.5*|w|^2 + C * sum hinge(1 - y*f(x))."""
    f = decision_values(model, train_set.features)
    hinge = np.maximum(0.0, 1.0 - train_set.labels * f)
    return 0.5 * float(model.weights @ model.weights + model.bias**2) + c_penalty * float(hinge.sum())
