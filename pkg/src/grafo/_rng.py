"""Named random streams derived from one master seed.

Every stochastic step asks for a stream keyed by a path of non-negative
integers, e.g. ``generator(seed, SUBSAMPLE, k)``.  Results therefore do not
depend on the order in which jobs run or on how many workers run them.
"""
import numpy as np

# stream tags
MODEL = 1
DATA = 2
SUBSAMPLE = 3
LEARNER = 4
FOREST = 5
IMPORTANCE = 6
GIBBS = 7
REPETITION = 8


def seed_sequence(seed, *keys):
    return np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(k) for k in keys))


def generator(seed, *keys):
    return np.random.default_rng(seed_sequence(seed, *keys))


def derive_seed(seed, *keys):
    """A 64-bit integer seed for the stream ``(seed, *keys)``."""
    lo, hi = seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)
