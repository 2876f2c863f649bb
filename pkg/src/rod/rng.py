"""Named, order-independent random streams derived from a single seed."""

import zlib

import numpy as np


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Generator for substream ``name`` of ``seed``.

    Streams with different names are statistically independent, and drawing
    from one never shifts another, so reordering modules keeps runs stable.
    """
    key = [int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))]
    key.extend(int(x) & 0xFFFFFFFF for x in extra)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))
