"""Intent-shift features and a from-scratch logistic regression with F1 threshold tuning."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from coalition_scope.engine import Order
from coalition_scope.intent import ActionDistribution, entropy, top_action

FEATURE_NAMES = ("p_star_before", "p_star_after", "delta_p", "h_before", "h_after", "delta_h")
THRESHOLD_GRID = tuple(round(k / 100, 2) for k in range(1, 100))


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class IntentFeatures:
    p_star_before: float
    p_star_after: float
    h_before: float
    h_after: float
    a_star: Order | None = None

    @property
    def delta_p(self) -> float:
        return self.p_star_after - self.p_star_before

    @property
    def delta_h(self) -> float:
        return self.h_after - self.h_before

    def vector(self) -> np.ndarray:
        return np.array([self.p_star_before, self.p_star_after, self.delta_p,
                         self.h_before, self.h_after, self.delta_h])


def compute_features(before: ActionDistribution, after: ActionDistribution) -> IntentFeatures:
    """Shift of the after-dialogue top order between the two distributions."""
    if before.unit != after.unit:
        raise ClassifierError(f"feature pair mixes units {before.unit} and {after.unit}")
    if set(before.orders) != set(after.orders):
        raise ClassifierError(f"{after.unit}: before/after distributions have different supports")
    a_star, p_after = top_action(after)
    return IntentFeatures(before.prob(a_star), p_after, entropy(before), entropy(after), a_star)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def f1_at(probs: np.ndarray, labels: np.ndarray, threshold: float) -> float:
    pred = probs >= threshold
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def tune_threshold(probs, labels) -> float:
    """Grid threshold with the best F1; ties go to the lower threshold."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    best_t, best_f = THRESHOLD_GRID[0], -1.0
    for t in THRESHOLD_GRID:
        f = f1_at(probs, labels, t)
        if f > best_f:
            best_t, best_f = t, f
    return best_t


@dataclass(frozen=True)
class ClassifierConfig:
    lr: float = 0.1
    iters: int = 2000
    l2: float = 1e-3


@dataclass(frozen=True)
class LogisticModel:
    weights: tuple[float, ...]
    bias: float
    threshold: float
    mean: tuple[float, ...] = (0.0,) * len(FEATURE_NAMES)
    std: tuple[float, ...] = (1.0,) * len(FEATURE_NAMES)
    features: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if len(self.weights) != len(self.features):
            raise ClassifierError("one weight per feature required")
        if not 0.0 < self.threshold < 1.0:
            raise ClassifierError("threshold must lie in (0, 1)")

    def logit(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x - np.asarray(self.mean)) / np.asarray(self.std)
        return z @ np.asarray(self.weights) + self.bias

    def probability(self, x) -> np.ndarray:
        return sigmoid(self.logit(x))

    def predict(self, x) -> np.ndarray:
        return self.probability(x) >= self.threshold

    def to_document(self) -> dict:
        return {
            "features": list(self.features),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "threshold": float(self.threshold),
            "standardization": {"mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std]},
        }

    @classmethod
    def from_document(cls, doc) -> "LogisticModel":
        try:
            features = tuple(doc["features"])
            if features != FEATURE_NAMES:
                raise ClassifierError(f"unexpected feature list {features}")
            return cls(
                tuple(float(w) for w in doc["weights"]), float(doc["bias"]), float(doc["threshold"]),
                tuple(float(v) for v in doc["standardization"]["mean"]),
                tuple(float(v) for v in doc["standardization"]["std"]),
            )
        except (KeyError, TypeError) as exc:
            raise ClassifierError(f"malformed model document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_document(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "LogisticModel":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ClassifierError(f"{path}: {exc}") from exc
        return cls.from_document(doc)


def _matrix(rows) -> np.ndarray:
    return np.array([r.vector() if isinstance(r, IntentFeatures) else np.asarray(r, dtype=float) for r in rows])


def train_classifier(train: Sequence[tuple], seed: int = 0, config: ClassifierConfig | None = None) -> LogisticModel:
    """Full-batch gradient descent on standardized features, then F1 threshold tuning.

    Weights start at zero and the objective is convex, so the fit is fully
    determined by the data; ``seed`` is accepted for interface stability.
    """
    cfg = config or ClassifierConfig()
    if not train:
        raise ClassifierError("no training data")
    x = _matrix([f for f, _ in train])
    y = np.array([bool(lbl) for _, lbl in train])
    if not np.all(np.isfinite(x)):
        raise ClassifierError("non-finite feature values")
    if y.all() or not y.any():
        raise ClassifierError("training data must contain both classes")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    z = (x - mean) / std
    yf = y.astype(float)
    w = np.zeros(z.shape[1])
    b = 0.0
    n = len(yf)
    for _ in range(cfg.iters):
        err = sigmoid(z @ w + b) - yf
        w -= cfg.lr * (z.T @ err / n + cfg.l2 * w)
        b -= cfg.lr * float(err.mean())
    threshold = tune_threshold(sigmoid(z @ w + b), y)
    return LogisticModel(tuple(w.tolist()), b, threshold, tuple(mean.tolist()), tuple(std.tolist()))
