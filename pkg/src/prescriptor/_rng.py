"""Deterministic random streams keyed by (master seed, purpose, ...)."""

import zlib

import numpy as np


def _key_part(part):
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed, *key):
    return np.random.SeedSequence(int(seed) & (2**64 - 1),
                                  spawn_key=tuple(_key_part(k) for k in key))


def stream(seed, *key):
    """Generator for one (seed, key...) pair; independent of call order."""
    return np.random.default_rng(seed_sequence(seed, *key))


def derive_seed(seed, *key):
    """A 63-bit integer seed for APIs that take plain ints."""
    return int(seed_sequence(seed, *key).generate_state(1, np.uint64)[0] >> np.uint64(1))
