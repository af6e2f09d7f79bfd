"""Hierarchical, counter-based random streams.

Every random draw in a run comes from a stream addressed by a key path such as
``(OUTER, k, SLOT, slot, S, j)`` below the run seed. A stream is turned into a numpy
``Generator`` over the Philox counter-based bit generator, seeded through a
``SeedSequence`` whose spawn key is the path. Two streams with different paths
are statistically independent, and the draws of a stream depend only on its
path, never on the order in which streams are consumed or on which thread
consumes them.
"""

from enum import IntEnum

import numpy as np

SEED_MASK = (1 << 64) - 1


class StreamRole(IntEnum):
    INIT = 0
    TASKS = 1
    SLOT = 2
    S = 3
    D = 4
    T = 5
    B_PRIME = 6
    D_L = 7
    ZETA = 8
    TRIAL = 9
    CHECK = 10
    OUTER = 11


class RngStream:
    __slots__ = ("seed", "key")

    def __init__(self, seed, key=()):
        if int(seed) < 0:
            raise ValueError(f"seed must be nonnegative, got {seed}")
        self.seed = int(seed) & SEED_MASK
        self.key = tuple(int(part) for part in key)
        if any(part < 0 for part in self.key):
            raise ValueError(f"stream key parts must be nonnegative, got {self.key}")

    def child(self, *parts):
        return RngStream(self.seed, self.key + tuple(int(part) for part in parts))

    def slot(self, index):
        return self.child(StreamRole.SLOT, index)

    def iteration(self, k):
        return self.child(StreamRole.OUTER, k)

    def generator(self):
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.Philox(sequence))

    def __eq__(self, other):
        return isinstance(other, RngStream) and (self.seed, self.key) == (other.seed, other.key)

    def __hash__(self):
        return hash((self.seed, self.key))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, key={self.key})"
