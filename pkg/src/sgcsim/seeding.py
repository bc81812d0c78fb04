"""Deterministic seed derivation.

Every random draw in the package comes from a numpy ``Philox`` stream keyed by
``(master seed, purpose tag, coordinates...)``. Streams for data, placement and
stragglers never overlap, and a cell's randomness does not depend on which
other cells exist.
"""
from __future__ import annotations

import numpy as np

DEFAULT_SEED = 20190517

# purpose tags
DATA = 1
ASSIGNMENT = 2
STRAGGLER = 3
PROBE = 4
BETA0 = 5


def _words(coords) -> tuple[int, ...]:
    out = []
    for c in coords:
        if isinstance(c, float):
            # grid values such as p = 0.3 are keyed by value, not position
            c = int(round(c * 1_000_000))
        c = int(c)
        if c < 0:
            raise ValueError(f"seed coordinate must be non-negative, got {c}")
        out.append(c)
    return tuple(out)


def seed_sequence(seed: int, *coords) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=_words(coords))


def generator(seed: int, *coords) -> np.random.Generator:
    """Independent generator for ``(seed, *coords)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *coords)))


def philox_key(seed: int, *coords) -> np.ndarray:
    return seed_sequence(seed, *coords).generate_state(2, np.uint64)


def derive(seed: int, *coords) -> int:
    """A 63-bit child seed, for handing to components that take an integer seed."""
    state = seed_sequence(seed, *coords).generate_state(2, np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])
