"""Per-frame cell classification: feature standardization, a KNN point
classifier with deterministic tie handling, and accuracy/confusion metrics.

Serialization note: classifier state is stored as JSON with full-precision
float repr, so save -> load -> predict is bit-for-bit identical to the
original. Keep it that way; evaluation reproducibility depends on it.
"""

from __future__ import annotations

import json
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .dataset import N_CELLS

KNN_FORMAT = "cellloc-knn"
KNN_VERSION = 1


@dataclass(frozen=True)
class TrainingSet:
    """Feature rows with their ground-truth cell labels."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.x, dtype=np.float64))
        y = np.ascontiguousarray(np.asarray(self.y, dtype=np.int64))
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] == 0:
            raise ValueError(f"expected non-empty (rows, features) array, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ValueError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
        if ((y < 0) | (y >= N_CELLS)).any():
            raise ValueError(f"labels must be in 0..{N_CELLS - 1}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n_features(self) -> int:
        return int(self.x.shape[1])

    def __len__(self) -> int:
        return int(self.x.shape[0])


@dataclass(frozen=True)
class Standardizer:
    """Per-column z-scoring fitted on training data.

    Columns with zero spread keep scale 1 so they pass through centered
    instead of dividing by zero.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        for a in (mean, std):
            a.setflags(write=False)
        return cls(mean, std)

    @classmethod
    def identity(cls, n_features: int) -> "Standardizer":
        mean = np.zeros(n_features)
        std = np.ones(n_features)
        for a in (mean, std):
            a.setflags(write=False)
        return cls(mean, std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"expected {self.mean.shape[0]} features, got {x.shape[-1]}")
        return (x - self.mean) / self.std


class Classifier(ABC):
    """Anything that maps feature rows to cell labels, one frame at a time."""

    @abstractmethod
    def fit(self, train: TrainingSet) -> "Classifier":
        ...

    @abstractmethod
    def predict_sequence(self, x: np.ndarray) -> np.ndarray:
        ...

    def predict(self, row: np.ndarray) -> int:
        return int(self.predict_sequence(np.atleast_2d(np.asarray(row, dtype=np.float64)))[0])


@dataclass
class KnnClassifier(Classifier):
    """Majority vote over the k nearest training rows (Euclidean distance).

    Deterministic by construction: equidistant neighbors are taken in
    training-row order, and vote ties go to the smallest label. k larger
    than the training set is clamped.
    """

    k: int = 5
    standardize: bool = True
    _scaler: Standardizer | None = field(default=None, repr=False)
    _train_x: np.ndarray | None = field(default=None, repr=False)
    _train_y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def is_fitted(self) -> bool:
        return self._train_x is not None

    def fit(self, train: TrainingSet) -> "KnnClassifier":
        scaler = (
            Standardizer.fit(train.x) if self.standardize else Standardizer.identity(train.n_features)
        )
        if len(np.unique(train.y)) == 1:
            warnings.warn(
                f"training data contains a single class ({int(train.y[0])}); "
                "every prediction will repeat it",
                stacklevel=2,
            )
        tx = np.ascontiguousarray(scaler.transform(train.x))
        tx.setflags(write=False)
        self._scaler = scaler
        self._train_x = tx
        self._train_y = train.y
        return self

    def predict_sequence(self, x: np.ndarray) -> np.ndarray:
        if not self.is_fitted:
            raise ValueError("classifier is not fitted")
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"expected (rows, features) array, got shape {x.shape}")
        if x.shape[1] != self._train_x.shape[1]:
            raise ValueError(
                f"query has {x.shape[1]} features but classifier was fitted on {self._train_x.shape[1]}"
            )
        if x.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        q = np.ascontiguousarray(self._scaler.transform(x))
        k = min(self.k, self._train_x.shape[0])
        return _kernels.knn_predict(self._train_x, self._train_y, q, k)

    def to_json(self) -> str:
        if not self.is_fitted:
            raise ValueError("classifier is not fitted")
        payload = {
            "format": KNN_FORMAT,
            "version": KNN_VERSION,
            "k": self.k,
            "standardize": self.standardize,
            "mean": [float(v) for v in self._scaler.mean],
            "std": [float(v) for v in self._scaler.std],
            "train_x": [[float(v) for v in row] for row in self._train_x],
            "train_y": [int(v) for v in self._train_y],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "KnnClassifier":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ValueError(f"not valid JSON: {e}") from None
        if not isinstance(payload, dict) or payload.get("format") != KNN_FORMAT:
            raise ValueError(f"not a {KNN_FORMAT} document")
        if payload.get("version") != KNN_VERSION:
            raise ValueError(f"unsupported version {payload.get('version')!r}")
        clf = cls(k=int(payload["k"]), standardize=bool(payload["standardize"]))
        mean = np.array(payload["mean"], dtype=np.float64)
        std = np.array(payload["std"], dtype=np.float64)
        tx = np.ascontiguousarray(np.array(payload["train_x"], dtype=np.float64))
        ty = np.ascontiguousarray(np.array(payload["train_y"], dtype=np.int64))
        if tx.ndim != 2 or tx.shape[0] != ty.shape[0] or tx.shape[1] != mean.shape[0]:
            raise ValueError("inconsistent stored shapes")
        for a in (mean, std, tx, ty):
            a.setflags(write=False)
        clf._scaler = Standardizer(mean, std)
        clf._train_x = tx
        clf._train_y = ty
        return clf

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "KnnClassifier":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def accuracy(truth: np.ndarray, predicted: np.ndarray) -> float:
    """Fraction of frames classified into the correct cell."""
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise ValueError(f"shape mismatch: {truth.shape} vs {predicted.shape}")
    if truth.shape[0] == 0:
        raise ValueError("cannot score an empty sequence")
    return float(np.count_nonzero(truth == predicted)) / truth.shape[0]


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = frames whose true cell is i and predicted cell is j."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int64))
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {c.shape}")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        if self.total == 0:
            raise ValueError("empty confusion matrix")
        return float(np.trace(self.counts)) / self.total


def confusion(truth: np.ndarray, predicted: np.ndarray, n: int = N_CELLS) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise ValueError(f"shape mismatch: {truth.shape} vs {predicted.shape}")
    for name, a in (("truth", truth), ("predicted", predicted)):
        if a.size and ((a < 0) | (a >= n)).any():
            raise ValueError(f"{name} labels must be in 0..{n - 1}")
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (truth, predicted), 1)
    return ConfusionMatrix(counts)
