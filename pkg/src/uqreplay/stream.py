"""Seeded datasets and single-pass class-incremental streams."""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .rng import substream

TASK_ORDERINGS = ("by_task_index", "by_task_size_desc")


@dataclass(eq=False)
class Sample:
    """One labeled input vector with identity and task provenance."""

    id: int
    features: np.ndarray
    label: int
    task: int


class Dataset:
    """Feature matrix, integer labels, and stable per-row sample ids."""

    def __init__(self, X, y, ids=None):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError(f"X must be 2-dimensional, got shape {self.X.shape}")
        if self.y.shape != (self.X.shape[0],):
            raise ValueError("y must have one label per row of X")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite values")
        if self.y.size and self.y.min() < 0:
            raise ValueError("labels must be non-negative")
        self.ids = (
            np.arange(self.X.shape[0], dtype=np.int64)
            if ids is None
            else np.asarray(ids, dtype=np.int64)
        )
        if self.ids.shape != (self.X.shape[0],):
            raise ValueError("ids must have one entry per row of X")
        if np.unique(self.ids).size != self.ids.size:
            raise ValueError("ids must be unique")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def class_labels(self) -> np.ndarray:
        return np.unique(self.y)

    def indices_of_class(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.y == label)

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.ids[idx])


@dataclass(frozen=True)
class TaskAssignment:
    """Seeded mapping of class labels onto tasks: task t holds task_classes[t]."""

    task_classes: tuple
    task_count: int
    classes_per_task: int

    @property
    def psi(self) -> dict:
        return {c: t for t, group in enumerate(self.task_classes) for c in group}

    def classes_of(self, task: int) -> tuple:
        return self.task_classes[task]

    def task_of(self, label: int) -> int:
        for t, group in enumerate(self.task_classes):
            if label in group:
                return t
        raise KeyError(f"label {label} is not assigned to any task")


def assign_classes(classes, task_count: int, rng: np.random.Generator) -> TaskAssignment:
    """Shuffle classes and partition them into task_count equal groups."""
    classes = [int(c) for c in classes]
    if not classes:
        raise ValueError("classes must be non-empty")
    if task_count < 1:
        raise ValueError("task_count must be >= 1")
    if len(classes) % task_count != 0:
        raise ValueError(
            f"class count {len(classes)} is not divisible by task_count {task_count}"
        )
    per_task = len(classes) // task_count
    order = [classes[i] for i in rng.permutation(len(classes))]
    groups = tuple(
        tuple(order[t * per_task : (t + 1) * per_task]) for t in range(task_count)
    )
    return TaskAssignment(groups, task_count, per_task)


def longtail_sizes(n_max: int, rho: float, class_count: int) -> list:
    """Geometrically decaying class sizes from n_max down to round(n_max * rho).

    Size of rank i among k classes is round(n_max * rho^(i/(k-1))), half-up,
    floored at 1.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if not 0.0 < rho <= 1.0:
        raise ValueError("rho must be in (0, 1]")
    if class_count < 2:
        raise ValueError("class_count must be >= 2")
    sizes = []
    for i in range(class_count):
        raw = n_max * rho ** (i / (class_count - 1))
        sizes.append(max(1, int(math.floor(raw + 0.5))))
    return sizes


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-blob classification data: one seeded center per class."""

    class_count: int
    dim: int
    samples_per_class: int
    class_center_scale: float = 1.25
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 1 or self.dim < 1 or self.samples_per_class < 1:
            raise ValueError("class_count, dim and samples_per_class must be positive")
        if self.noise_scale <= 0:
            raise ValueError("noise_scale must be > 0")
        if self.class_center_scale < 0:
            raise ValueError("class_center_scale must be >= 0")


def generate_synthetic(spec: SyntheticSpec, class_sizes=None) -> Dataset:
    """Materialize the dataset for a spec; deterministic per spec.seed.

    class_sizes optionally overrides the per-class sample count (used for
    long-tailed streams); defaults to spec.samples_per_class for every class.
    """
    rng = substream(spec.seed, "data-gen")
    k = spec.class_count
    if class_sizes is None:
        sizes = [spec.samples_per_class] * k
    else:
        sizes = [int(s) for s in class_sizes]
        if len(sizes) != k or any(s < 1 for s in sizes):
            raise ValueError("class_sizes must give a positive size for each class")
    centers = rng.normal(0.0, spec.class_center_scale, size=(k, spec.dim))
    blocks, labels = [], []
    for c in range(k):
        blocks.append(centers[c] + rng.normal(0.0, spec.noise_scale, size=(sizes[c], spec.dim)))
        labels.extend([c] * sizes[c])
    return Dataset(np.concatenate(blocks, axis=0), np.asarray(labels))


@dataclass(frozen=True)
class StreamBatch:
    """One mini-batch of the single-pass stream; samples share one task."""

    samples: tuple
    task: int
    batch_index: int


def make_stream(
    dataset: Dataset,
    assignment: TaskAssignment,
    batch_size: int,
    rng: np.random.Generator,
    ordering: str = "by_task_index",
) -> list:
    """Chunk the dataset into a task-sequential, single-pass batch stream.

    Tasks are presented in index order or by descending sample count; samples
    within a task are shuffled once, and the last batch of a task may be
    short.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if ordering not in TASK_ORDERINGS:
        raise ValueError(f"ordering must be one of {TASK_ORDERINGS}")

    task_indices = {}
    for t in range(assignment.task_count):
        idx = np.flatnonzero(np.isin(dataset.y, assignment.classes_of(t)))
        if idx.size == 0:
            raise ValueError(f"task {t} has no samples")
        task_indices[t] = idx

    stages = list(range(assignment.task_count))
    if ordering == "by_task_size_desc":
        stages.sort(key=lambda t: (-task_indices[t].size, t))

    batches = []
    batch_index = 0
    for t in stages:
        idx = task_indices[t]
        idx = idx[rng.permutation(idx.size)]
        for start in range(0, idx.size, batch_size):
            chunk = idx[start : start + batch_size]
            samples = tuple(
                Sample(
                    id=int(dataset.ids[i]),
                    features=dataset.X[i].copy(),
                    label=int(dataset.y[i]),
                    task=t,
                )
                for i in chunk
            )
            batches.append(StreamBatch(samples=samples, task=t, batch_index=batch_index))
            batch_index += 1
    return batches


def train_test_split_by_class(
    dataset: Dataset, test_fraction: float, rng: np.random.Generator
):
    """Per-class holdout split; keeps at least one training sample per class."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must be in [0, 1)")
    test_idx = []
    train_idx = []
    for label in dataset.class_labels:
        idx = dataset.indices_of_class(label)
        idx = idx[rng.permutation(idx.size)]
        n_test = int(round(test_fraction * idx.size))
        if test_fraction > 0.0 and idx.size >= 2:
            n_test = min(max(n_test, 1), idx.size - 1)
        else:
            n_test = 0
        test_idx.extend(idx[:n_test])
        train_idx.extend(idx[n_test:])
    return dataset.subset(sorted(train_idx)), dataset.subset(sorted(test_idx))


def load_csv(path, label_column: str) -> Dataset:
    """Load a dataset from a headered CSV of numeric features plus a label column.

    Labels may be integers (used as-is) or strings (mapped to dense indices by
    first appearance). Rows with missing fields, non-numeric features, or
    non-finite values are rejected with their line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a header row") from None
        if label_column not in header:
            raise ValueError(
                f"{path}: unknown label column {label_column!r}; columns are {header}"
            )
        label_pos = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_pos]
        if not feature_names:
            raise ValueError(f"{path}: no feature columns besides the label")

        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(
                    f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            feats = []
            for pos, (name, value) in enumerate(zip(header, row)):
                if pos == label_pos:
                    continue
                try:
                    feats.append(float(value))
                except ValueError:
                    raise ValueError(
                        f"{path}, line {lineno}: non-numeric value {value!r} in column {name!r}"
                    ) from None
            if not all(math.isfinite(v) for v in feats):
                raise ValueError(f"{path}, line {lineno}: non-finite feature value")
            rows.append(feats)
            raw_labels.append(row[label_pos].strip())

    if not rows:
        raise ValueError(f"{path}: no data rows")

    try:
        labels = [int(v) for v in raw_labels]
    except ValueError:
        mapping = {}
        labels = []
        for v in raw_labels:
            if v not in mapping:
                mapping[v] = len(mapping)
            labels.append(mapping[v])
    if min(labels) < 0:
        raise ValueError(f"{path}: integer labels must be non-negative")
    return Dataset(np.asarray(rows), np.asarray(labels))
