"""Deterministic random-stream factory.

Every source of randomness in the package goes through :class:`SeededRng`,
which hands out independent numpy generators keyed by (seed, stream,
counter). Identical seeds produce identical streams on all platforms.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SeededRng"]


class SeededRng:
    """Counter-based stream factory over a 64-bit seed.

    ``stream`` namespaces independent uses of the same seed (data vs.
    parameter init, say) into disjoint key space. Each call to
    :meth:`next_generator` returns a generator positioned at a disjoint
    2^192-sized block of the Philox counter space, so draws never overlap
    and the k-th draw is independent of how much earlier draws consumed.
    """

    def __init__(self, seed: int, counter: int = 0, stream: int = 0):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not 0 <= int(stream) < 2**64:
            raise ValueError("stream must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.stream = int(stream)
        self.counter = int(counter)

    def next_generator(self) -> np.random.Generator:
        key = self.seed + (self.stream << 64)
        gen = np.random.Generator(np.random.Philox(key=key, counter=self.counter << 192))
        self.counter += 1
        return gen

    def __repr__(self) -> str:
        return f"SeededRng(seed={self.seed}, counter={self.counter}, stream={self.stream})"
