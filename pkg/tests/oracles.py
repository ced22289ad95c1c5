"""Shared independent oracles and tiny builders used by the test suite."""

from itertools import combinations

import numpy as np

from uqreplay.memory import MemoryEntry
from uqreplay.stream import Sample


def make_sample(sid, label, task=0):
    return Sample(id=sid, features=np.array([float(sid)]), label=label, task=task)


def make_entry(sid, label, score, inserted_at=0):
    return MemoryEntry(sample=make_sample(sid, label), score=score, inserted_at=inserted_at)


def fixed_scores(mapping):
    """score_fn stub: look up a fixed score per sample id."""

    def fn(samples):
        return np.array([mapping[s.id] for s in samples])

    return fn


def entry_key(e):
    return (e.score, e.inserted_at, e.sample.id)


def brute_force_retained(candidates, quota, strategy):
    """Enumerate all quota-sized subsets; optimize total score under the tie-break.

    Scores in these tests are multiples of 1/64 or similar dyadics, so float
    sums are exact and ties are decided by the (score, inserted_at, id) keys.
    """
    if len(candidates) <= quota:
        return {e.sample.id for e in candidates}
    if quota == 0:
        return set()
    best = None
    for subset in combinations(candidates, quota):
        total = sum(e.score for e in subset)
        if strategy == "bottom":
            key = (total, tuple(sorted(entry_key(e) for e in subset)))
            better = best is None or key < best[0]
        else:
            key = (total, tuple(sorted((entry_key(e) for e in subset), reverse=True)))
            better = best is None or key > best[0]
        if better:
            best = (key, {e.sample.id for e in subset})
    return best[1]
