"""Seeded, counter-based random streams.

Every random draw in the package comes from a Philox generator (numpy's
counter-based bit generator) keyed by ``SeedSequence(seed, spawn_key=path)``.
A *path* is a tuple of non-negative ints or strings naming the consumer, e.g.
``("init", 17)`` for neuron 17 of the initializer or ``("grad", t)`` for the
Monte-Carlo batch of step ``t``.  Streams with different paths are
statistically independent, and adding consumers never perturbs existing ones,
so widening a network does not reshuffle the neurons it already had.
"""
import zlib

import numpy as np


def _key_part(part):
    if isinstance(part, (bool, np.bool_)):
        raise TypeError("boolean stream key parts are ambiguous")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream key parts must be non-negative")
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported stream key part {part!r}")


def seed_sequence(seed, *path):
    if isinstance(seed, np.random.SeedSequence):
        base_key = tuple(seed.spawn_key)
        return np.random.SeedSequence(
            seed.entropy, spawn_key=base_key + tuple(_key_part(p) for p in path)
        )
    return np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(p) for p in path))


def stream(seed, *path):
    """A fresh ``numpy.random.Generator`` (Philox) for ``(seed, *path)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))


def as_generator(rng, *path):
    """Accept an int seed, a SeedSequence or an existing Generator."""
    if isinstance(rng, np.random.Generator):
        if path:
            raise ValueError("cannot derive a keyed substream from a live Generator")
        return rng
    return stream(rng, *path)
