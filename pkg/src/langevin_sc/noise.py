"""Counter-based random streams.

Every draw is addressed by ``(seed, stream, index)`` so a run can be
resumed at any step and reproduce the same noise.  Draws are produced in
blocks of consecutive indices from one Philox counter.  The block size is
part of the stream definition (a fixed function of ``block`` and the draw
shape); which blocks happen to be cached never changes the values.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1

# stream ids
LATENT = 1
DATA = 2
INIT = 3
RESERVOIR = 4
DICT_INIT = 5
HOLDOUT = 6


def rng_for(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, stream, index) address."""
    bitgen = np.random.Philox(key=[seed & MASK64, stream & MASK64],
                              counter=[0, 0, 0, index & MASK64])
    return np.random.Generator(bitgen)


class NoiseSource:
    """Standard-normal draws indexed by absolute step.

    >>> src = NoiseSource(seed=3, stream=1)
    >>> bool((src.normal(10, (2, 2)) == NoiseSource(3, 1).normal(10, (2, 2))).all())
    True
    """

    def __init__(self, seed: int, stream: int = LATENT, block: int = 256):
        self.seed = int(seed)
        self.stream = int(stream)
        self.block = int(block)
        self._key = None
        self._cache = None

    def normal(self, step: int, shape) -> np.ndarray:
        """Draw for ``step``; the returned array is a read-only view."""
        shape = tuple(shape)
        size = int(np.prod(shape, dtype=np.int64))
        # large states get shorter blocks; still a pure function of shape
        block = max(1, min(self.block, (1 << 20) // max(size, 1)))
        b, off = divmod(int(step), block)
        key = (b, shape)
        if self._key != key:
            # the block's counter word is disjoint from every other block
            tag = zlib.crc32(repr(shape).encode()) << 32
            gen = rng_for(self.seed, self.stream | tag, b)
            self._cache = gen.standard_normal((block,) + shape)
            self._cache.flags.writeable = False
            self._key = key
        return self._cache[off]

    def __repr__(self):
        return f"NoiseSource(seed={self.seed}, stream={self.stream})"
