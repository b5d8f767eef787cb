"""Synthetic classification datasets and CSV ingestion.

Generators are deterministic given a seed and return a stratified 80/20
train/test split. The CSV format is header-free rows
``f_0,...,f_{d-1},label`` with integer labels in [0, K); train and test
live in separate files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .seeding import child_rng

__all__ = [
    "Dataset",
    "SplitData",
    "gaussian_blobs",
    "spirals",
    "generate_dataset",
    "load_csv_pair",
    "write_csv",
]

GENERATORS = ("gaussian-blobs", "spirals")


@dataclass
class Dataset:
    """Feature matrix, integer labels, and the label-space size."""

    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.labels.shape[0]:
            raise ValueError("inputs and labels disagree on the number of examples")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels must lie in [0, n_classes)")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


@dataclass
class SplitData:
    train: Dataset
    test: Dataset

    @property
    def n_classes(self) -> int:
        return self.train.n_classes

    @property
    def dim(self) -> int:
        return self.train.inputs.shape[1]


def _stratified_split(
    inputs: np.ndarray, labels: np.ndarray, n_classes: int, rng: np.random.Generator
) -> SplitData:
    train_idx, test_idx = [], []
    for cls in range(n_classes):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = max(1, int(round(idx.size * 0.8)))
        train_idx.extend(idx[:cut])
        test_idx.extend(idx[cut:])
    train_idx = np.asarray(train_idx)
    test_idx = np.asarray(test_idx)
    return SplitData(
        Dataset(inputs[train_idx], labels[train_idx], n_classes),
        Dataset(inputs[test_idx], labels[test_idx], n_classes),
    )


def gaussian_blobs(
    n_classes: int,
    dim: int,
    separation: float,
    samples_per_class: int = 100,
    seed: int = 0,
) -> SplitData:
    """Unit-covariance Gaussian clusters at random directions.

    Class means sit at `separation` times random unit vectors, so larger
    separation makes the classes linearly separable in the limit.
    """
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if samples_per_class < 2:
        raise ValueError("need at least two samples per class to split")
    rng = child_rng(seed, "blobs")
    means = rng.normal(size=(n_classes, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    means *= separation
    inputs = np.concatenate(
        [means[k] + rng.normal(size=(samples_per_class, dim)) for k in range(n_classes)]
    )
    labels = np.repeat(np.arange(n_classes), samples_per_class)
    return _stratified_split(inputs, labels, n_classes, child_rng(seed, "split"))


def spirals(
    n_classes: int,
    samples_per_class: int = 100,
    noise: float = 0.2,
    seed: int = 0,
) -> SplitData:
    """Interleaved 2-D spiral arms, one per class."""
    if n_classes < 2:
        raise ValueError("need at least two classes")
    if samples_per_class < 2:
        raise ValueError("need at least two samples per class to split")
    rng = child_rng(seed, "spirals")
    rows, labels = [], []
    for k in range(n_classes):
        t = np.linspace(0.25, 1.0, samples_per_class)
        angle = 2.5 * np.pi * t + 2.0 * np.pi * k / n_classes
        radius = t
        pts = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        pts += noise * rng.normal(size=pts.shape) * 0.1
        rows.append(pts)
        labels.append(np.full(samples_per_class, k))
    inputs = np.concatenate(rows)
    labels = np.concatenate(labels)
    return _stratified_split(inputs, labels, n_classes, child_rng(seed, "split"))


def generate_dataset(generator: str, params: dict, seed: int = 0) -> SplitData:
    """Build a SplitData from a generator name and its keyword parameters."""
    if generator == "gaussian-blobs":
        return gaussian_blobs(
            n_classes=int(params.get("classes", 10)),
            dim=int(params.get("dim", 16)),
            separation=float(params.get("separation", 2.5)),
            samples_per_class=int(params.get("samples_per_class", 100)),
            seed=seed,
        )
    if generator == "spirals":
        return spirals(
            n_classes=int(params.get("classes", 3)),
            samples_per_class=int(params.get("samples_per_class", 100)),
            noise=float(params.get("noise", 0.2)),
            seed=seed,
        )
    raise ValueError(f"unknown dataset generator {generator!r}, expected one of {GENERATORS}")


def _read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                features = [float(x) for x in row[:-1]]
                label = int(row[-1])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: malformed row: {exc}") from exc
            rows.append((features, label))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0][0])
    if any(len(feats) != width for feats, _ in rows):
        raise ValueError(f"{path}: inconsistent feature width")
    inputs = np.asarray([feats for feats, _ in rows])
    labels = np.asarray([label for _, label in rows])
    return inputs, labels


def load_csv_pair(train_path: str | Path, test_path: str | Path) -> SplitData:
    """Load train/test CSVs; the label space is the union of both files."""
    train_x, train_y = _read_csv(train_path)
    test_x, test_y = _read_csv(test_path)
    if train_x.shape[1] != test_x.shape[1]:
        raise ValueError("train and test files disagree on feature width")
    n_classes = int(max(train_y.max(), test_y.max())) + 1
    return SplitData(
        Dataset(train_x, train_y, n_classes), Dataset(test_x, test_y, n_classes)
    )


def write_csv(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for features, label in zip(dataset.inputs, dataset.labels):
            writer.writerow([repr(float(x)) for x in features] + [int(label)])
