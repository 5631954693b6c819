"""Deterministic named random substreams.

All randomness in the package is drawn from numpy Generators derived from a
master seed plus a tuple of stream names/indices (for example
("inc", query_index, restart)).  Names are hashed with crc32 so the mapping
is stable across platforms and Python versions, unlike the builtin hash().
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_int(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed: int, *names) -> np.random.Generator:
    """Generator for the substream identified by (seed, *names)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_int(n) for n in names]
    return np.random.default_rng(np.random.SeedSequence(entropy))
