"""Seeded random substreams.

All randomness in the package flows from a single top-level seed through
named substreams, so changing how one component draws numbers never
perturbs the draws seen by another.
"""

import zlib

import numpy as np


def substream(seed, name):
    """Return a Generator for the (seed, name) pair.

    The name is hashed with crc32 and mixed into the seed material, so
    distinct names yield independent streams and the mapping is stable
    across runs and platforms.
    """
    tag = zlib.crc32(name.encode("utf8"))
    return np.random.default_rng([int(seed), tag])
