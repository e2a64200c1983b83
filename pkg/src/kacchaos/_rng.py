"""Seed derivation shared by every stochastic component.

All generators are numpy ``Philox`` (4x64, 10 rounds) keyed through a
``SeedSequence`` built from an integer seed plus integer spawn keys, so a
given key path always yields the same stream on any platform.
"""
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(*keys):
    """Hash an arbitrary tuple of keys (ints, floats, strings) to a 64-bit seed."""
    h = hashlib.blake2b(repr(keys).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def make_rng(seed, *keys):
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64,
                                spawn_key=tuple(int(k) & _MASK64 for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(0 if rng is None else rng)
