"""Counter-based random streams.

Every draw in an experiment is addressed by ``(seed, tag, *indices)``.  The
address is hashed by :class:`numpy.random.SeedSequence` into a Philox key, so a
trial's stream does not depend on which worker evaluates it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_word(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Independent generator for the address ``(seed, tag, *indices)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    spawn_key = (_tag_word(tag),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(ss))
