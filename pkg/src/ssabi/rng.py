"""Named random substreams.

Every random draw in a run comes from a generator keyed by
``(seed, purpose, *indices)``. Purposes are hashed to stable integers so the
stream for, say, ``("shuffle", epoch=3)`` never depends on how many draws other
purposes consumed.
"""
from __future__ import annotations

import zlib

import numpy as np


def _purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def substream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Return an independent PCG64 generator for ``(seed, purpose, *indices)``."""
    key = (_purpose_key(purpose),) + tuple(int(i) for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))
