"""Seeded random streams.

All randomness comes from numpy's ``SFC64`` bit generator (Small Fast
Chaotic, a 256-bit state counter-based generator built from add, shift and
rotate steps).  Its output stream for a given seed is fixed by numpy's
stability policy, so results are bit-reproducible across platforms.

Seeds are unsigned 64-bit integers.  A replication ``r`` of an experiment
with base seed ``s`` uses ``s XOR splitmix64(r)``; inside a replication each
arm (and the policy, when it randomizes) gets its own child stream spawned
from that seed, so a run of horizon ``n`` is an exact prefix of any longer
run with the same seed.
"""

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One round of the splitmix64 finalizer, used as an integer hash."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def replication_seed(base_seed, replication):
    return check_seed(base_seed) ^ splitmix64(int(replication))


def make_generator(seed):
    return np.random.Generator(np.random.SFC64(check_seed(seed)))


def spawn_generators(seed, count):
    """Independent child generators, one per consumer (arm, policy, ...)."""
    children = np.random.SeedSequence(check_seed(seed)).spawn(count)
    return [np.random.Generator(np.random.SFC64(child)) for child in children]
