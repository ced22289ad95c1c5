"""Named, independent random substreams derived from a single run seed."""

import hashlib
import struct

import numpy as np

#: Substream labels used by the experiment runner. Each consumer owns one
#: label, so enabling or disabling a consumer never shifts another's draws.
SUBSTREAMS = (
    "task-assignment",
    "stream-shuffle",
    "model-init",
    "replay",
    "tta",
    "data-gen",
    "er-retention",
    "test-split",
)


def substream(seed: int, label: str, *key: int) -> np.random.Generator:
    """Return a generator keyed by (seed, label, *key).

    The label and any extra integer key parts are hashed (SHA-256, so the
    derivation is stable across platforms and Python processes) into the
    SeedSequence spawn key. Same arguments always give an identical stream;
    different labels give statistically independent streams.
    """
    h = hashlib.sha256(label.encode("utf-8"))
    for part in key:
        h.update(struct.pack("<q", int(part)))
    words = struct.unpack("<4I", h.digest()[:16])
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=words))
