"""Task-accuracy bookkeeping and catastrophic-forgetting metrics."""

import csv
from dataclasses import dataclass

import numpy as np


class AccuracyMatrix:
    """Lower-triangular table: row t holds accuracy on tasks 0..t after task t.

    Rows are written once, in stage order, and are immutable afterwards.
    """

    def __init__(self, task_count: int):
        if task_count < 1:
            raise ValueError("task_count must be >= 1")
        self.task_count = int(task_count)
        self._rows = []

    def record_task_end(self, t: int, accuracies) -> "AccuracyMatrix":
        if t != len(self._rows):
            raise ValueError(
                f"rows must be written once and in order: expected row {len(self._rows)}, got {t}"
            )
        if t >= self.task_count:
            raise ValueError(f"row {t} exceeds task count {self.task_count}")
        accs = [float(a) for a in accuracies]
        if len(accs) != t + 1:
            raise ValueError(f"row {t} needs {t + 1} accuracies, got {len(accs)}")
        if any(not 0.0 <= a <= 1.0 for a in accs):
            raise ValueError("accuracies must lie in [0, 1]")
        self._rows.append(tuple(accs))
        return self

    @property
    def rows_recorded(self) -> int:
        return len(self._rows)

    @property
    def is_complete(self) -> bool:
        return len(self._rows) == self.task_count

    def accuracy(self, t: int, j: int) -> float:
        if not (0 <= j <= t < len(self._rows)):
            raise ValueError(f"cell ({t}, {j}) is not recorded")
        return self._rows[t][j]

    def rows(self) -> list:
        return list(self._rows)

    def to_csv(self, path) -> None:
        """Row = training stage, column = task; undefined cells left blank."""
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["stage"] + [f"task_{j}" for j in range(self.task_count)])
            for t, row in enumerate(self._rows):
                padded = [repr(a) for a in row] + [""] * (self.task_count - len(row))
                writer.writerow([t] + padded)


def last_accuracy(matrix: AccuracyMatrix) -> float:
    """Mean accuracy over all tasks after the final task."""
    if not matrix.is_complete:
        raise ValueError("accuracy matrix is incomplete")
    return float(np.mean(matrix.rows()[-1]))


def last_forgetting(matrix: AccuracyMatrix) -> float:
    """Mean over past tasks of (best historical accuracy - final accuracy).

    For task j the historical maximum runs over stages j..T-2; the last task
    is excluded from the average. Undefined for a single task.
    """
    if not matrix.is_complete:
        raise ValueError("accuracy matrix is incomplete")
    T = matrix.task_count
    if T < 2:
        raise ValueError("last forgetting is undefined for a single task")
    rows = matrix.rows()
    gaps = []
    for j in range(T - 1):
        best = max(rows[t][j] for t in range(j, T - 1))
        gaps.append(best - rows[T - 1][j])
    return float(np.mean(gaps))


def relative_improvement(f_baseline: float, f_method: float) -> float:
    """(f_baseline - f_method) / f_baseline; positive when the method forgets less."""
    if f_baseline <= 0.0:
        raise ValueError("relative improvement is undefined for baseline forgetting <= 0")
    return (f_baseline - f_method) / f_baseline


@dataclass(frozen=True)
class RunSummary:
    """Final metrics of one seeded run."""

    last_accuracy: float
    last_forgetting: float
    seed: int
    fingerprint: str
