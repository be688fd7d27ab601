from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from zsl.errors import CoverageError, ShapeError


@dataclass(frozen=True)
class Dataset:
    """Feature rows with integer labels indexing into ``classes``."""

    features: np.ndarray
    labels: np.ndarray
    classes: Tuple[str, ...]

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.ndim != 1 or self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError("dataset", self.features.shape, self.labels.shape)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise CoverageError("Dataset labels reference classes outside the class list")

    @classmethod
    def from_class_ids(cls, features: np.ndarray, class_ids: Sequence[str], classes: Sequence[str]) -> "Dataset":
        lookup = {c: i for i, c in enumerate(classes)}
        try:
            labels = np.array([lookup[c] for c in class_ids], dtype=np.int64)
        except KeyError as e:
            raise CoverageError(f"Sample label {e.args[0]!r} is not among the dataset classes") from None
        return cls(np.asarray(features, dtype=np.float64), labels, tuple(classes))

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.features.shape[1])

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_ids(self) -> np.ndarray:
        return np.array(self.classes, dtype=object)[self.labels]

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.classes)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(np.asarray(features, dtype=np.float64), self.labels, self.classes)

    def counts(self) -> Dict[str, int]:
        tally = np.bincount(self.labels, minlength=self.n_classes)
        return {c: int(n) for c, n in zip(self.classes, tally)}


def split_per_class(data: Dataset, test_fraction: float) -> Tuple[Dataset, Dataset]:
    """Per-class split keeping sample order; the leading samples of each class go to train."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    train_idx, test_idx = [], []
    for label in range(data.n_classes):
        idx = np.flatnonzero(data.labels == label)
        if idx.size < 2:
            raise CoverageError(f"Class '{data.classes[label]}' needs at least 2 samples to split, has {idx.size}")
        n_test = min(idx.size - 1, max(1, int(round(idx.size * test_fraction))))
        train_idx.extend(idx[:idx.size - n_test])
        test_idx.extend(idx[idx.size - n_test:])
    return data.subset(np.array(train_idx, dtype=np.int64)), data.subset(np.array(test_idx, dtype=np.int64))


def fit_standardizer(features: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def standardize(features: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (features - mean) / std
