"""Seed derivation and per-index random substreams.

Every random draw in the package comes from a Philox (counter-based)
generator keyed by the master seed plus a tuple of integer keys, via
``numpy.random.SeedSequence(seed, spawn_key=keys)``. String keys are mapped
to integers with CRC-32 so they are stable across platforms and runs.
A sample's content therefore depends only on ``(seed, keys)``, never on
the order in which samples are produced or on the number of workers.
"""

import zlib

import numpy as np


def _key(part):
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        if part < 0:
            # spawn keys must be non-negative; keep negative lags distinct
            return (1 << 32) + (-int(part))
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed, *keys):
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))


def substream(seed, *keys):
    """Return an independent ``Generator`` for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *keys)))


def derive_seed(seed, *keys):
    """Derive a 63-bit child seed from ``seed`` and a tuple of keys."""
    state = seed_sequence(seed, *keys).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)
