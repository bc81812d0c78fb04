"""Straggler sets with nu-iteration persistence.

Each block of ``nu`` consecutive iterations has its own slot in a Philox
counter stream, so the straggler set at iteration ``t`` depends only on
``(seed, t // nu)`` and can be produced out of order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import seeding


@dataclass(frozen=True)
class StragglerModel:
    p: float
    nu: int
    n: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"straggle probability p={self.p} outside [0, 1]")
        if self.nu < 1:
            raise ValueError("nu must be at least 1")
        if self.n < 1:
            raise ValueError("n must be at least 1")

    @property
    def _stride(self) -> int:
        # Philox4x64 yields four 64-bit words per counter step
        return (self.n + 3) // 4

    def _key(self):
        return seeding.philox_key(self.seed, seeding.STRAGGLER)


def _uniforms(model: StragglerModel, first_block: int, nblocks: int) -> np.ndarray:
    k = model._stride
    bg = np.random.Philox(key=model._key(), counter=first_block * k)
    u = np.random.Generator(bg).random(nblocks * 4 * k)
    return u.reshape(nblocks, 4 * k)[:, : model.n]


def straggler_mask(model: StragglerModel, t: int) -> np.ndarray:
    """Boolean mask over workers, True where the worker straggles at iteration t."""
    if t < 0:
        raise ValueError("iteration index must be non-negative")
    if model.p == 0.0:
        return np.zeros(model.n, dtype=bool)
    if model.p == 1.0:
        return np.ones(model.n, dtype=bool)
    return _uniforms(model, t // model.nu, 1)[0] < model.p


def sample_round(model: StragglerModel, t: int) -> frozenset:
    """Indices of the workers that straggle at iteration ``t``."""
    return frozenset(int(j) for j in np.flatnonzero(straggler_mask(model, t)))


def straggler_masks(model: StragglerModel, T: int, start: int = 0) -> np.ndarray:
    """Masks for iterations ``start .. start+T-1`` as a ``(T, n)`` array.

    Row ``k`` equals ``straggler_mask(model, start + k)``.
    """
    if T <= 0:
        return np.zeros((0, model.n), dtype=bool)
    if model.p == 0.0:
        return np.zeros((T, model.n), dtype=bool)
    if model.p == 1.0:
        return np.ones((T, model.n), dtype=bool)
    b0 = start // model.nu
    b1 = (start + T - 1) // model.nu
    blocks = _uniforms(model, b0, b1 - b0 + 1) < model.p
    idx = np.arange(start, start + T) // model.nu - b0
    return blocks[idx]
