"""Named random streams derived from one base seed.

Each purpose (data, x0, model init, run-state init, batch draws) gets its own
``SeedSequence`` keyed by a stable hash of its name plus integer indices, so
adding draws in one stream never shifts another.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream_rng", "stream_key"]


def stream_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def stream_rng(base_seed: int, name: str, *index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(stream_key(name), *map(int, index)))
    return np.random.default_rng(ss)
