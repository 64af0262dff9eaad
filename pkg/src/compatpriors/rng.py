"""Counter-based random streams.

Every random quantity is drawn from a Philox generator keyed by an explicit
(seed, replicate, variable) tuple, so a replicate can be regenerated alone
or in any order and still produce the same numbers.
"""

from __future__ import annotations

import zlib

import numpy as np


def name_key(name: str) -> int:
    """Stable 32-bit integer for a variable name."""
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; string keys are hashed."""
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    words = [int(seed)]
    for k in keys:
        k = name_key(k) if isinstance(k, str) else int(k)
        if k < 0:
            raise ValueError("stream keys must be nonnegative")
        words.append(k)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
