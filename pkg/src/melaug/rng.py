"""Seeded random streams.

Every random draw in the package comes from ``numpy.random.Generator`` over
PCG64, whose output for a given seed is fixed across platforms and numpy
releases. Per-trial seeds are derived by hashing a key tuple with BLAKE2b, so
a trial's draws depend only on its key and never on scheduling.
"""

import hashlib

import numpy as np

from melaug.errors import ParameterError

SEED_MAX = 2**64 - 1


def check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ParameterError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= SEED_MAX:
        raise ParameterError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def generator(seed):
    return np.random.Generator(np.random.PCG64(check_seed(seed)))


def substream(seed, *key):
    """Derive a 64-bit seed from ``seed`` and a key path.

    >>> substream(7, "utt1", "tw", 3, 0) == substream(7, "utt1", "tw", 3, 0)
    True
    """
    text = "\x1f".join([str(check_seed(seed))] + [str(k) for k in key])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")
