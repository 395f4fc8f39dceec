"""Named, seed-derived random streams.

Every random draw in the package comes from ``stream(seed, name, ...)`` so a
single integer seed reproduces a whole run and streams never alias.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode())] + [int(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
