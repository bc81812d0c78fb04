"""Gradient estimators, step sizes and the simulation loop.

Every aggregator returns an estimate of the *mean* gradient
``(1/m) X^T (X beta - y)``. Internally an estimate is expressed through
per-row coefficients ``c`` so that ``g_hat = X^T (c * (X beta - y))``; the
batched simulator uses that form to advance many independent runs in lockstep
over a shared data matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .assignment import Assignment, DegreeProfile
from .datagen import Dataset
from .straggler import StragglerModel, straggler_masks


class Scheme(str, Enum):
    SGC = "SGC"
    BGC = "BGC"
    ERASUREHEAD = "ErasureHead"
    IGNORE_STRAGGLERS = "IgnoreStragglers"
    SGC_SEND_ALL = "SGCSendAll"
    EXACT_GD = "ExactGD"

    @classmethod
    def parse(cls, name) -> "Scheme":
        if isinstance(name, cls):
            return name
        key = str(name).replace("-", "").replace("_", "").lower()
        for s in cls:
            if s.value.lower() == key:
                return s
        raise ValueError(f"unknown scheme {name!r}; choose from {[s.value for s in cls]}")


# --- step sizes -----------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalStep:
    """``scale * ln(10**log_base_exponent) / t**power``; defaults give 7 ln(10^100)/t^0.7."""

    scale: float = 7.0
    power: float = 0.7
    log_base_exponent: float = 100.0

    def values(self, t: np.ndarray) -> np.ndarray:
        return self.scale * self.log_base_exponent * math.log(10.0) / np.power(t, self.power)


@dataclass(frozen=True)
class TheoremL2Step:
    """``min(1/2, ln(1/eps^2)/t) / spectral_norm``."""

    epsilon: float
    spectral_norm: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not self.spectral_norm > 0:
            raise ValueError("spectral_norm must be positive")

    def values(self, t: np.ndarray) -> np.ndarray:
        return np.minimum(0.5, math.log(1.0 / self.epsilon**2) / t) / self.spectral_norm


@dataclass(frozen=True)
class InverseLambdaStep:
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def values(self, t: np.ndarray) -> np.ndarray:
        return 1.0 / (self.lam * t)


StepSchedule = EmpiricalStep | TheoremL2Step | InverseLambdaStep


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 1:
        raise ValueError("step sizes are defined for t >= 1")
    return float(schedule.values(np.asarray(float(t))))


@dataclass(frozen=True)
class SchemeSpec:
    kind: Scheme
    schedule: StepSchedule = field(default_factory=EmpiricalStep)
    p_assumed: float = 0.0
    # SGCSendAll only: divide the distinct-row sum by the pooled expected count
    # sum_i (1 - p^d_i) instead of weighting row i by 1/(m (1 - p^d_i))
    pooled_send_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Scheme.parse(self.kind))
        if not 0.0 <= self.p_assumed < 1.0:
            raise ValueError(f"p_assumed={self.p_assumed} must lie in [0, 1)")


@dataclass(frozen=True)
class ProjectionSpec:
    radius: float | None = None

    def __post_init__(self):
        if self.radius is not None and not (0 < self.radius < math.inf):
            raise ValueError("projection radius must be positive and finite")


def project_ball(beta: np.ndarray, spec: ProjectionSpec | None) -> np.ndarray:
    if spec is None or spec.radius is None:
        return beta
    nrm = float(np.linalg.norm(beta))
    if nrm <= spec.radius:
        return beta
    return beta * (spec.radius / nrm)


# --- gradients and the literal worker/master protocol --------------------


def row_gradient(x_i, y_i: float, beta) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=float)
    return (float(x_i @ beta) - y_i) * x_i


def full_gradient(data: Dataset, beta) -> np.ndarray:
    return data.X.T @ (data.X @ beta - data.y)


def worker_sum(S_j, data: Dataset, beta, degrees: DegreeProfile, p_assumed: float) -> np.ndarray:
    """Message of one SGC worker: ``sum_{i in S_j} grad_i / (d_i (1 - p))``."""
    out = np.zeros(data.ell)
    for i in S_j:
        out += row_gradient(data.X[i], data.y[i], beta) / (degrees.degrees[i] * (1.0 - p_assumed))
    return out


def _plain_sum(S_j, data: Dataset, beta) -> np.ndarray:
    out = np.zeros(data.ell)
    for i in S_j:
        out += row_gradient(data.X[i], data.y[i], beta)
    return out


def aggregate(spec: SchemeSpec, a: Assignment, survivors: Iterable[int], data: Dataset, beta) -> np.ndarray:
    """Master-side estimate of the mean gradient from the surviving workers' messages."""
    survivors = sorted(set(int(j) for j in survivors))
    if any(j < 0 or j >= a.n for j in survivors):
        raise ValueError("survivor index out of range")
    m = data.m
    p = spec.p_assumed
    kind = spec.kind
    if kind is Scheme.EXACT_GD:
        return full_gradient(data, beta) / m
    if kind in (Scheme.SGC, Scheme.BGC):
        total = np.zeros(data.ell)
        for j in survivors:
            total += worker_sum(a.worker_sets[j], data, beta, a.degrees, p)
        return total / m
    if kind is Scheme.IGNORE_STRAGGLERS:
        total = np.zeros(data.ell)
        for j in survivors:
            total += _plain_sum(a.worker_sets[j], data, beta)
        return total / (m * (1.0 - p))
    if kind is Scheme.ERASUREHEAD:
        total = np.zeros(data.ell)
        seen = set()
        for j in survivors:
            g = int(a.groups[j])
            if g not in seen:
                seen.add(g)
                total += _plain_sum(a.worker_sets[j], data, beta)
        return total / m
    if kind is Scheme.SGC_SEND_ALL:
        rows = set()
        for j in survivors:
            rows.update(int(i) for i in a.worker_sets[j])
        rows = sorted(rows)
        if spec.pooled_send_all:
            return _plain_sum(rows, data, beta) / send_all_divisor(a.degrees, p)
        total = np.zeros(data.ell)
        for i in rows:
            total += row_gradient(data.X[i], data.y[i], beta) / (1.0 - p ** int(a.degrees.degrees[i]))
        return total / m
    raise AssertionError(kind)


def send_all_divisor(degrees: DegreeProfile, p: float) -> float:
    """Expected number of distinct rows received per iteration."""
    return float(np.sum(1.0 - p ** degrees.degrees.astype(float)))


# --- coefficient form -----------------------------------------------------


@dataclass(frozen=True)
class _Plan:
    """Per-run constants turning a survivor mask into row coefficients."""

    rows: np.ndarray  # (m, k) row-to-unit incidence; a unit is a worker or a worker group
    units: np.ndarray  # (k, n) unit-to-worker incidence
    any_unit: bool  # unit counts once if any of its workers survives
    any_row: bool  # row counts once if any unit holding it counts
    scale: np.ndarray  # (m,) multiplier
    exact: bool


def _plan(spec: SchemeSpec, a: Assignment) -> _Plan:
    m, n = a.m, a.n
    p = spec.p_assumed
    M = a.membership
    eye = np.eye(n)
    deg = a.degrees.degrees.astype(float)
    kind = spec.kind
    if kind is Scheme.EXACT_GD:
        return _Plan(M, eye, False, False, np.full(m, 1.0 / m), True)
    if kind in (Scheme.SGC, Scheme.BGC):
        return _Plan(M, eye, False, False, 1.0 / (m * deg * (1.0 - p)), False)
    if kind is Scheme.IGNORE_STRAGGLERS:
        return _Plan(M, eye, False, False, np.full(m, 1.0 / (m * (1.0 - p))), False)
    if kind is Scheme.SGC_SEND_ALL:
        if spec.pooled_send_all:
            scale = np.full(m, 1.0 / send_all_divisor(a.degrees, p))
        else:
            scale = 1.0 / (m * (1.0 - p**deg))
        return _Plan(M, eye, False, True, scale, False)
    if kind is Scheme.ERASUREHEAD:
        k = int(a.groups.max()) + 1
        units = np.zeros((k, n))
        units[a.groups, np.arange(n)] = 1.0
        first = np.array([np.flatnonzero(a.groups == g)[0] for g in range(k)])
        rows = M[:, first]
        return _Plan(rows, units, True, False, np.full(m, 1.0 / m), False)
    raise AssertionError(kind)


def row_coefficients(spec: SchemeSpec, a: Assignment, alive) -> np.ndarray:
    """Coefficients ``c`` with ``aggregate(...) == X^T (c * (X beta - y))``.

    ``alive`` is a boolean mask over workers (True = not straggling).
    """
    plan = _plan(spec, a)
    if plan.exact:
        return plan.scale.copy()
    u = plan.units @ np.asarray(alive, dtype=float)
    if plan.any_unit:
        u = (u > 0).astype(float)
    cnt = plan.rows @ u
    if plan.any_row:
        cnt = (cnt > 0).astype(float)
    return plan.scale * cnt


def expected_coefficients(spec: SchemeSpec, a: Assignment, p: float) -> np.ndarray:
    """Expectation of :func:`row_coefficients` when each worker straggles iid w.p. ``p``."""
    plan = _plan(spec, a)
    if plan.exact:
        return plan.scale.copy()
    q = 1.0 - p
    if plan.any_unit:
        sizes = plan.units.sum(axis=1)
        u = 1.0 - p**sizes
    else:
        u = plan.units.sum(axis=1) * q
    if plan.any_row:
        held = plan.rows.sum(axis=1)
        cnt = 1.0 - p**held
    else:
        cnt = plan.rows @ u
    return plan.scale * cnt


def expected_estimate(spec: SchemeSpec, a: Assignment, model: StragglerModel, data: Dataset, beta) -> np.ndarray:
    """Closed-form expectation of :func:`aggregate` over one round's straggler draw."""
    c = expected_coefficients(spec, a, model.p)
    return data.X.T @ (c * (data.X @ beta - data.y))


def second_moment_oracle(a: Assignment, p: float, i1: int, i2: int) -> float:
    """``E[Z_i1 Z_i2]`` where ``Z_i`` counts non-straggling holders of row ``i``."""
    M = a.membership
    d1 = float(M[i1].sum())
    if i1 == i2:
        return d1 * p * (1 - p) + d1 * d1 * (1 - p) ** 2
    d2 = float(M[i2].sum())
    o = float(np.sum((M[i1] > 0) & (M[i2] > 0)))
    return o * p * (1 - p) + d1 * d2 * (1 - p) ** 2


# --- simulation -----------------------------------------------------------


class DivergenceError(RuntimeError):
    def __init__(self, message, iteration: int):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class RunTrace:
    scheme: str
    p: float
    nu: int
    run: int
    errors: np.ndarray  # length T+1


@dataclass(frozen=True)
class Column:
    """One independent run inside a batched simulation."""

    spec: SchemeSpec
    assignment: Assignment
    model: StragglerModel
    beta0: np.ndarray


@dataclass
class BatchResult:
    errors: np.ndarray  # (R, T+1); NaN after divergence
    betas: np.ndarray  # (R, ell) final iterates
    diverged_at: list  # per column: None or iteration index


def _gammas(schedule: StepSchedule, T: int) -> np.ndarray:
    g = schedule.values(np.arange(1, T + 1, dtype=float))
    if np.any(~(g > 0)) or not np.all(np.isfinite(g)):
        raise ValueError("step schedule must be positive and finite")
    return g


def simulate(
    data: Dataset,
    columns: Sequence[Column],
    beta_star,
    T: int,
    proj: ProjectionSpec | None = None,
    chunk: int = 1000,
) -> BatchResult:
    """Advance every column for ``T`` iterations in lockstep.

    Iteration ``k`` (0-based) uses the straggler mask of ``sample_round(model, k)``
    and the step ``gamma_{k+1}``. Columns are independent: the outcome of a
    column does not depend on which other columns share the batch, up to
    floating-point summation order inside BLAS.
    """
    if T < 0:
        raise ValueError("T must be non-negative")
    X, y = data.X, data.y
    m, ell = X.shape
    R = len(columns)
    beta_star = np.asarray(beta_star, dtype=float)
    B = np.stack([np.asarray(c.beta0, dtype=float) for c in columns], axis=1) if R else np.zeros((ell, 0))
    for c in columns:
        if c.assignment.m != m:
            raise ValueError("assignment row count does not match the data")
        if c.model.n != c.assignment.n:
            raise ValueError("straggler model and assignment disagree on the worker count")
    errors = np.full((R, T + 1), np.nan)
    errors[:, 0] = np.linalg.norm(B - beta_star[:, None], axis=0)
    diverged: list = [None] * R
    if R == 0 or T == 0:
        return BatchResult(errors, B.T.copy(), diverged)

    plans = [_plan(c.spec, c.assignment) for c in columns]
    nmax = max(c.assignment.n for c in columns)
    kmax = max(pl.units.shape[0] for pl in plans)
    # stacked incidence matrices, zero-padded to common widths
    rows = np.zeros((R, m, kmax))
    units = np.zeros((R, kmax, nmax))
    scale = np.empty((m, R))
    for r, pl in enumerate(plans):
        k, n = pl.units.shape
        rows[r, :, :k] = pl.rows
        units[r, :k, :n] = pl.units
        scale[:, r] = pl.scale
    # rows held by at most 63 units are counted with bit masks and popcount
    use_bits = kmax <= 63 and hasattr(np, "bitwise_count")
    if use_bits:
        weights = np.left_shift(np.uint64(1), np.arange(kmax, dtype=np.uint64))
        row_bits = np.stack([(pl.rows > 0).astype(np.uint64) @ weights[: pl.rows.shape[1]] for pl in plans], axis=1)
    any_unit = np.array([pl.any_unit for pl in plans])
    any_row = np.array([pl.any_row for pl in plans])
    exact = np.array([pl.exact for pl in plans])
    gam = np.stack([_gammas(c.spec.schedule, T) for c in columns])  # (R, T)
    radius = None if proj is None else proj.radius
    active = np.ones(R, dtype=bool)

    with np.errstate(over="ignore", invalid="ignore"):
        for start in range(0, T, chunk):
            L = min(chunk, T - start)
            alive = np.ones((R, L, nmax))
            for r, c in enumerate(columns):
                alive[r, :, : c.model.n] = ~straggler_masks(c.model, L, start)
            for k in range(L):
                t = start + k
                u = np.matmul(units, alive[:, k, :, None])[..., 0]
                u = np.where(any_unit[:, None], u > 0, u)
                if use_bits:
                    # u is 0/1 for every scheme, so counts are popcounts
                    ubits = (u > 0).astype(np.uint64) @ weights
                    cnt = np.bitwise_count(row_bits & ubits).astype(float)  # (m, R)
                else:
                    cnt = np.matmul(rows, u[..., None])[..., 0].T
                cnt = np.where(any_row, cnt > 0, cnt)
                cnt[:, exact] = 1.0
                coef = scale * cnt  # (m, R)
                resid = X @ B - y[:, None]
                G = X.T @ (coef * resid)
                B = B - gam[:, t] * G
                if radius is not None:
                    nrm = np.linalg.norm(B, axis=0)
                    over = nrm > radius
                    if np.any(over):
                        B[:, over] *= radius / nrm[over]
                err = np.linalg.norm(B - beta_star[:, None], axis=0)
                bad = active & ~np.isfinite(err)
                if np.any(bad):
                    for r in np.flatnonzero(bad):
                        diverged[r] = t + 1
                    active &= ~bad
                    B[:, bad] = 0.0
                    err[bad] = np.nan
                err[~active] = np.nan
                errors[:, t + 1] = err
    return BatchResult(errors, B.T.copy(), diverged)


def run_scheme(
    spec: SchemeSpec,
    data: Dataset,
    a: Assignment,
    model: StragglerModel,
    beta0,
    beta_star,
    T: int,
    proj: ProjectionSpec | None = None,
    run: int = 0,
    allow_p_mismatch: bool = False,
) -> RunTrace:
    """Simulate one scheme and return the trace of ``||beta_t - beta*||`` for t = 0..T."""
    if not allow_p_mismatch and spec.p_assumed != model.p:
        raise ValueError(
            f"estimator assumes p={spec.p_assumed} but stragglers use p={model.p}; "
            "pass allow_p_mismatch=True to study the mismatch"
        )
    res = simulate(data, [Column(spec, a, model, np.asarray(beta0, dtype=float))], beta_star, T, proj)
    if res.diverged_at[0] is not None:
        it = res.diverged_at[0]
        raise DivergenceError(f"{spec.kind.value}: non-finite iterate at iteration {it}", iteration=it)
    return RunTrace(scheme=spec.kind.value, p=model.p, nu=model.nu, run=run, errors=res.errors[0])
