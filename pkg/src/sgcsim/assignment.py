"""Replication degrees and data-to-worker placements.

Rows and workers are 0-indexed. An :class:`Assignment` is immutable; its dense
membership matrix is built once and shared by every simulation that uses it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import seeding


@dataclass(frozen=True)
class DegreeProfile:
    degrees: np.ndarray  # int, length m, each in [1, n]
    sigma: float
    avg_degree: float

    @property
    def m(self) -> int:
        return len(self.degrees)

    @property
    def d_min(self) -> int:
        return int(self.degrees.min())


def constant_profile(m: int, d: int) -> DegreeProfile:
    degrees = np.full(m, int(d), dtype=np.int64)
    return DegreeProfile(degrees=degrees, sigma=float("nan"), avg_degree=float(d))


def replication_degrees(X, d: float, n: int, clamp: bool = True) -> DegreeProfile:
    """Degrees proportional to squared row norms, rounded to integers.

    ``sigma = d * m / ||X||_F^2`` so that the unrounded degrees average to
    ``d``. Rounded degrees are clamped into ``[1, n]``; with ``clamp=False`` a
    row that would get degree 0 is an error instead.
    """
    X = np.asarray(X, dtype=float)
    m = X.shape[0]
    if n < 1:
        raise ValueError("n must be at least 1")
    if d < 1:
        raise ValueError(f"target redundancy d={d} must be >= 1")
    if d > n:
        raise ValueError(f"target redundancy d={d} exceeds the worker count n={n}")
    sq = np.einsum("ij,ij->i", X, X)
    fro = float(sq.sum())
    if fro == 0.0:
        raise ValueError("all rows are zero")
    sigma = d * m / fro
    raw = np.rint(sigma * sq).astype(np.int64)
    if not clamp:
        bad = np.flatnonzero(raw < 1)
        if bad.size:
            raise ValueError(f"row {bad[0]} rounds to degree 0 (squared norm {sq[bad[0]]:g})")
        if raw.max() > n:
            raise ValueError(f"row {int(np.argmax(raw))} needs degree {raw.max()} > n={n}")
    degrees = np.clip(raw, 1, n)
    return DegreeProfile(degrees=degrees, sigma=sigma, avg_degree=float(degrees.mean()))


@dataclass(frozen=True)
class Assignment:
    worker_sets: tuple  # n sorted int arrays
    degrees: DegreeProfile
    n: int
    membership: np.ndarray = field(init=False, repr=False, compare=False)
    groups: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.worker_sets) != self.n:
            raise ValueError(f"expected {self.n} worker sets, got {len(self.worker_sets)}")
        m = self.degrees.m
        M = np.zeros((m, self.n))
        for j, s in enumerate(self.worker_sets):
            if s.size and (s.min() < 0 or s.max() >= m):
                raise ValueError(f"worker {j} holds an out-of-range row")
            if np.unique(s).size != s.size:
                raise ValueError(f"worker {j} holds a row twice")
            M[s, j] = 1.0
        mult = M.sum(axis=1)
        if not np.array_equal(mult, self.degrees.degrees):
            i = int(np.flatnonzero(mult != self.degrees.degrees)[0])
            raise ValueError(f"row {i} is held by {int(mult[i])} workers but has degree {self.degrees.degrees[i]}")
        M.setflags(write=False)
        # workers holding identical row sets send identical partial gradients
        _, groups = np.unique(M.T, axis=0, return_inverse=True)
        object.__setattr__(self, "membership", M)
        object.__setattr__(self, "groups", np.asarray(groups).reshape(-1))

    @property
    def m(self) -> int:
        return self.degrees.m

    def to_text(self) -> str:
        return "".join(" ".join(str(int(i)) for i in s) + "\n" for s in self.worker_sets)

    @classmethod
    def from_text(cls, text: str, m: int | None = None) -> "Assignment":
        lines = text.splitlines()
        sets = tuple(np.array(sorted(int(tok) for tok in ln.split()), dtype=np.int64) for ln in lines)
        if m is None:
            m = 1 + max((int(s.max()) for s in sets if s.size), default=-1)
        deg = np.zeros(m, dtype=np.int64)
        for s in sets:
            deg[s] += 1
        prof = DegreeProfile(degrees=deg, sigma=float("nan"), avg_degree=float(deg.mean()))
        return cls(worker_sets=sets, degrees=prof, n=len(sets))


def _from_membership(M: np.ndarray, profile: DegreeProfile, n: int) -> Assignment:
    sets = tuple(np.flatnonzero(M[:, j]).astype(np.int64) for j in range(n))
    return Assignment(worker_sets=sets, degrees=profile, n=n)


def assign_replicated(profile: DegreeProfile, n: int, seed: int) -> Assignment:
    """Send row ``i`` to a uniformly random ``d_i``-subset of the ``n`` workers."""
    deg = profile.degrees
    if deg.max() > n:
        raise ValueError(f"degree {deg.max()} exceeds the worker count n={n}")
    rng = seeding.generator(seed, seeding.ASSIGNMENT)
    # the first d_i entries of a random permutation form a uniform d_i-subset
    rank = np.argsort(np.argsort(rng.random((profile.m, n)), axis=1), axis=1)
    return _from_membership(rank < deg[:, None], profile, n)


def _contiguous_parts(m: int, k: int) -> list[np.ndarray]:
    return [np.asarray(a, dtype=np.int64) for a in np.array_split(np.arange(m), k)]


def assign_partition(m: int, n: int) -> Assignment:
    """Contiguous near-equal split of the rows, no redundancy."""
    if n > m:
        raise ValueError(f"cannot partition {m} rows among {n} workers without empty workers")
    return Assignment(worker_sets=tuple(_contiguous_parts(m, n)), degrees=constant_profile(m, 1), n=n)


def assign_fractional_repetition(m: int, n: int, d: int) -> Assignment:
    """``n/d`` blocks of ``d`` workers; every worker in block ``b`` holds partition ``b``."""
    if d < 1 or n % d:
        raise ValueError(f"d={d} must divide the worker count n={n}")
    blocks = n // d
    if blocks > m:
        raise ValueError(f"{blocks} partitions requested for only {m} rows")
    parts = _contiguous_parts(m, blocks)
    sets = tuple(parts[j // d] for j in range(n))
    return Assignment(worker_sets=sets, degrees=constant_profile(m, d), n=n)


def pairwise_overlap(a: Assignment, i1: int, i2: int) -> int:
    """Number of workers holding both rows."""
    if i1 == i2:
        raise ValueError("pairwise_overlap needs two distinct rows")
    M = a.membership
    return int(np.sum((M[i1] > 0) & (M[i2] > 0)))


def overlap_matrix(a: Assignment) -> np.ndarray:
    """``O[i1, i2]`` = workers holding both rows; the diagonal holds the degrees."""
    M = a.membership
    return M @ M.T
