"""Fixed-capacity, class-balanced replay memory with selectable retention.

Capacity is divided evenly over every class seen so far (remainder slots go
to the earliest-seen classes). When a class exceeds its quota, survivors are
picked from the union of stored and incoming members:

* ``bottom`` keeps the least uncertain samples,
* ``top`` keeps the most uncertain ones,
* ``step`` keeps an evenly spaced sweep across the uncertainty ordering,
* ``random`` keeps a uniform random subset (the experience-replay baseline;
  no uncertainty is computed).

Replay sampling draws uniformly without replacement from everything stored
for past tasks; samples of the current task are never replayed.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .stream import Sample

#: Retention strategy names accepted by the CLI and config files.
STRATEGIES = ("top", "step", "bottom")
RETENTION_MODES = STRATEGIES + ("random",)


@dataclass
class MemoryEntry:
    """A stored sample with its cached score and insertion counter."""

    sample: Sample
    score: float
    inserted_at: int

    def sort_key(self):
        return (self.score, self.inserted_at, self.sample.id)


def class_quotas(capacity: int, classes_seen) -> dict:
    """Split capacity evenly; the remainder goes one-each to the earliest classes."""
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    classes = list(classes_seen)
    if not classes:
        raise ValueError("classes_seen must be non-empty")
    if len(set(classes)) != len(classes):
        raise ValueError("classes_seen must not repeat labels")
    base, remainder = divmod(capacity, len(classes))
    return {c: base + (1 if i < remainder else 0) for i, c in enumerate(classes)}


def select_retained(candidates, quota: int, strategy: str) -> list:
    """Pick the surviving entries from score-ascending candidates.

    ``bottom`` takes the first ``quota``, ``top`` the last ``quota``, and
    ``step`` the indices floor(i*n/quota) for i in 0..quota-1.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    if quota < 0:
        raise ValueError("quota must be >= 0")
    candidates = list(candidates)
    scores = [c.score for c in candidates]
    if any(a > b for a, b in zip(scores, scores[1:])):
        raise ValueError("candidates must be sorted ascending by score")
    n = len(candidates)
    if n <= quota:
        return candidates
    if quota == 0:
        return []
    if strategy == "bottom":
        return candidates[:quota]
    if strategy == "top":
        return candidates[n - quota :]
    return [candidates[(i * n) // quota] for i in range(quota)]


class ReplayMemory:
    """Capacity-bounded per-class store of past samples."""

    def __init__(self, capacity: int, strategy: str = "bottom"):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        if strategy not in RETENTION_MODES:
            raise ValueError(f"strategy must be one of {RETENTION_MODES}, got {strategy!r}")
        self.capacity = int(capacity)
        self.strategy = strategy
        self._per_class = {}
        self._classes_seen = []
        self._updates = 0

    def __len__(self) -> int:
        return sum(len(v) for v in self._per_class.values())

    @property
    def classes_seen(self) -> tuple:
        return tuple(self._classes_seen)

    @property
    def update_count(self) -> int:
        return self._updates

    def entries(self) -> list:
        return [e for label in self._classes_seen for e in self._per_class.get(label, [])]

    def class_entries(self, label: int) -> list:
        return list(self._per_class.get(label, []))

    def quotas(self) -> dict:
        if not self._classes_seen:
            return {}
        return class_quotas(self.capacity, self._classes_seen)

    def update(self, batch, score_fn=None, rng=None) -> "ReplayMemory":
        """Fold one stream batch into the memory.

        ``score_fn(samples) -> array`` scores with the current model; it is
        called for the stored-plus-incoming union of every class under
        selection pressure (and for incoming members elsewhere), so cached
        scores track the evolving decision space. For ``random`` retention
        ``rng`` replaces the scorer. If scoring fails, the memory is left
        unchanged.
        """
        batch = list(batch)
        if not batch:
            raise ValueError("batch must be non-empty")
        scored = self.strategy != "random"
        if scored and score_fn is None:
            raise ValueError(f"score_fn is required for strategy {self.strategy!r}")
        if not scored and rng is None:
            raise ValueError("rng is required for random retention")

        incoming = {}
        for s in batch:
            incoming.setdefault(s.label, []).append(s)
        seen = set(self._classes_seen)
        classes_next = self._classes_seen + sorted(l for l in incoming if l not in seen)
        quotas = class_quotas(self.capacity, classes_next)
        counter = self._updates + 1

        plans = []
        to_score = []
        rescore = set()
        for label in classes_next:
            stored = self._per_class.get(label, [])
            inc = incoming.get(label, [])
            quota = quotas[label]
            if not inc and len(stored) <= quota:
                continue
            plans.append((label, stored, inc, quota))
            if scored and quota > 0:
                if len(stored) + len(inc) > quota:
                    rescore.add(label)
                    to_score.extend(e.sample for e in stored)
                to_score.extend(inc)

        fresh = {}
        if to_score:
            values = np.asarray(score_fn(to_score), dtype=np.float64)
            if values.shape != (len(to_score),):
                raise ValueError("score_fn must return one score per sample")
            if not np.all(np.isfinite(values)):
                raise ValueError("score_fn produced non-finite scores")
            fresh = {s.id: float(v) for s, v in zip(to_score, values)}

        staged = {}
        for label, stored, inc, quota in plans:
            candidates = [
                MemoryEntry(e.sample, fresh[e.sample.id] if label in rescore else e.score, e.inserted_at)
                for e in stored
            ]
            candidates += [
                MemoryEntry(s, fresh[s.id] if s.id in fresh else 0.0, counter) for s in inc
            ]
            candidates.sort(key=MemoryEntry.sort_key)
            if quota == 0:
                kept = []
            elif scored:
                kept = select_retained(candidates, quota, self.strategy)
            elif len(candidates) <= quota:
                kept = candidates
            else:
                pool = sorted(candidates, key=lambda e: (e.inserted_at, e.sample.id))
                picks = rng.choice(len(pool), size=quota, replace=False)
                kept = sorted((pool[i] for i in picks), key=MemoryEntry.sort_key)
            staged[label] = kept

        for label, kept in staged.items():
            if kept:
                self._per_class[label] = kept
            else:
                self._per_class.pop(label, None)
        self._classes_seen = classes_next
        self._updates = counter
        return self

    def sample_replay(self, n: int, current_task: int, rng: np.random.Generator) -> list:
        """Uniform sample without replacement from past-task entries.

        Returns every eligible sample when fewer than n exist; samples whose
        task equals current_task are excluded.
        """
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0:
            return []
        eligible = sorted(
            (e.sample for e in self.entries() if e.sample.task != current_task),
            key=lambda s: s.id,
        )
        if len(eligible) <= n:
            return eligible
        picks = rng.choice(len(eligible), size=n, replace=False)
        return [eligible[i] for i in picks]

    def dump_rows(self) -> list:
        """(sample_id, class, task, score, inserted_at) rows for inspection."""
        return [
            (e.sample.id, e.sample.label, e.sample.task, e.score, e.inserted_at)
            for label in self._classes_seen
            for e in self._per_class.get(label, [])
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "class", "task", "score", "inserted_at"])
            for row in self.dump_rows():
                writer.writerow([row[0], row[1], row[2], repr(row[3]), row[4]])
