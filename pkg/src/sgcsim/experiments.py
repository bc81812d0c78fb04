"""Experiment sweeps, error floors, trace files and empirical bound checks."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds, seeding
from .assignment import (
    Assignment,
    assign_fractional_repetition,
    assign_partition,
    assign_replicated,
    constant_profile,
    replication_degrees,
)
from .datagen import Dataset, SynthConfig, generate_synthetic, load_csv, normalize_spectral
from .engine import (
    Column,
    EmpiricalStep,
    InverseLambdaStep,
    ProjectionSpec,
    RunTrace,
    Scheme,
    SchemeSpec,
    StepSchedule,
    TheoremL2Step,
    simulate,
)
from .numerics import incoherence_mu, least_squares_optimum, min_eigenvalue
from .straggler import StragglerModel

log = logging.getLogger(__name__)

DEFAULT_P_VALUES = tuple(round(0.1 * k, 1) for k in range(10))


@dataclass(frozen=True)
class CsvSource:
    path: str
    has_header: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    data: SynthConfig | CsvSource = field(default_factory=SynthConfig)
    normalize: bool = True
    n: int = 10
    d: float = 2
    schemes: tuple = ("SGC", "BGC", "ErasureHead", "IgnoreStragglers", "SGCSendAll")
    schedule: object = field(default_factory=EmpiricalStep)  # StepSchedule or an Auto* placeholder
    p_values: tuple = DEFAULT_P_VALUES
    nu_values: tuple = (1,)
    T: int = 5000
    repetitions: int = 10
    master_seed: int = seeding.DEFAULT_SEED
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    floor_window: int = 100
    trace_every: int = 1
    batch_columns: int = 500
    pooled_send_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, "schemes", tuple(Scheme.parse(s).value for s in self.schemes))
        object.__setattr__(self, "p_values", tuple(float(p) for p in self.p_values))
        object.__setattr__(self, "nu_values", tuple(int(v) for v in self.nu_values))
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if any(not 0.0 <= p < 1.0 for p in self.p_values):
            raise ValueError("every p must lie in [0, 1)")
        if any(v < 1 for v in self.nu_values):
            raise ValueError("every nu must be at least 1")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.n < 1 or self.d < 1 or self.d > self.n:
            raise ValueError(f"need 1 <= d <= n (got d={self.d}, n={self.n})")
        if self.floor_window < 1 or self.trace_every < 1 or self.batch_columns < 1:
            raise ValueError("floor_window, trace_every and batch_columns must be positive")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        if isinstance(self.data, SynthConfig):
            syn = asdict(self.data)
            syn.pop("seed")  # data seed is derived from the master seed
            data = {"synthetic": syn, "normalize": self.normalize}
        else:
            data = {"csv": self.data.path, "has_header": self.data.has_header, "normalize": self.normalize}
        return {
            "data": data,
            "n": self.n,
            "d": self.d,
            "schemes": list(self.schemes),
            "schedule": schedule_to_dict(self.schedule),
            "p_values": list(self.p_values),
            "nu_values": list(self.nu_values),
            "T": self.T,
            "repetitions": self.repetitions,
            "seed": self.master_seed,
            "projection": {"radius": self.projection.radius},
            "floor_window": self.floor_window,
            "trace_every": self.trace_every,
            "batch_columns": self.batch_columns,
            "pooled_send_all": self.pooled_send_all,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        known = {
            "data", "n", "d", "schemes", "schedule", "p_values", "nu_values", "T",
            "repetitions", "seed", "projection", "floor_window", "trace_every",
            "batch_columns", "bounds", "pooled_send_all",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        kw = {}
        data = dict(raw.pop("data", {}) or {})
        kw["normalize"] = bool(data.pop("normalize", True))
        if "csv" in data:
            kw["data"] = CsvSource(path=str(data.pop("csv")), has_header=bool(data.pop("has_header", False)))
        else:
            syn = dict(data.pop("synthetic", {}) or {})
            syn.pop("seed", None)
            kw["data"] = SynthConfig(**syn)
        if data:
            raise ValueError(f"unknown data keys: {', '.join(sorted(data))}")
        if "schedule" in raw:
            kw["schedule"] = schedule_from_dict(raw.pop("schedule"))
        if "projection" in raw:
            proj = raw.pop("projection") or {}
            kw["projection"] = ProjectionSpec(radius=proj.get("radius"))
        if "seed" in raw:
            kw["master_seed"] = int(raw.pop("seed"))
        raw.pop("bounds", None)
        for key in ("schemes", "p_values", "nu_values"):
            if key in raw:
                v = raw.pop(key)
                kw[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        kw.update(raw)
        return cls(**kw)


@dataclass(frozen=True)
class AutoL2Step:
    """l2-bound step whose spectral norm is taken from the simulated data."""

    epsilon: float


@dataclass(frozen=True)
class AutoInverseLambda:
    """``1/(lambda t)`` step with ``lambda`` the smallest eigenvalue of the simulated data."""


def resolve_schedule(schedule, data: Dataset) -> StepSchedule:
    """Fill in instance constants, converting to the engine's mean-gradient form."""
    m = data.m
    if isinstance(schedule, AutoL2Step):
        return bounds.engine_l2_schedule(schedule.epsilon, incoherence_mu(data.X).spectral_norm, m)
    if isinstance(schedule, AutoInverseLambda):
        return bounds.engine_inverse_lambda_schedule(min_eigenvalue(data.X), m)
    return schedule


def schedule_to_dict(s) -> dict:
    if isinstance(s, AutoL2Step):
        return {"kind": "theorem_l2", "epsilon": s.epsilon, "spectral_norm": None}
    if isinstance(s, AutoInverseLambda):
        return {"kind": "inverse_lambda_t", "lambda": None}
    if isinstance(s, EmpiricalStep):
        return {"kind": "empirical", "scale": s.scale, "power": s.power, "log_base_exponent": s.log_base_exponent}
    if isinstance(s, TheoremL2Step):
        return {"kind": "theorem_l2", "epsilon": s.epsilon, "spectral_norm": s.spectral_norm}
    if isinstance(s, InverseLambdaStep):
        return {"kind": "inverse_lambda_t", "lambda": s.lam}
    raise TypeError(type(s))


def schedule_from_dict(raw: dict):
    raw = dict(raw or {})
    kind = raw.pop("kind", "empirical")
    if kind == "empirical":
        return EmpiricalStep(**raw)
    if kind == "theorem_l2":
        if raw.get("spectral_norm") is None:
            return AutoL2Step(epsilon=float(raw["epsilon"]))
        return TheoremL2Step(**raw)
    if kind == "inverse_lambda_t":
        if raw.get("lambda") is None:
            return AutoInverseLambda()
        return InverseLambdaStep(lam=float(raw.pop("lambda")))
    raise ValueError(f"unknown schedule kind {kind!r}")


# -- problem setup -----------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """Everything shared by the cells of one experiment."""

    raw: Dataset  # data as generated or loaded
    data: Dataset  # data the simulation runs on (spectrally normalized if requested)
    beta_star: np.ndarray
    spectral_norm: float  # of the raw data
    mu: float
    schedule: StepSchedule


def prepare_problem(cfg: ExperimentConfig) -> Problem:
    if isinstance(cfg.data, SynthConfig):
        syn = replace(cfg.data, seed=seeding.derive(cfg.master_seed, seeding.DATA))
        raw = generate_synthetic(syn)
    else:
        raw = load_csv(cfg.data.path, has_header=cfg.data.has_header)
    if cfg.n > raw.m:
        raise ValueError(f"n={cfg.n} workers exceeds the {raw.m} data rows")
    summary = incoherence_mu(raw.X)
    beta_star = least_squares_optimum(raw.X, raw.y)
    data = normalize_spectral(raw, summary.spectral_norm) if cfg.normalize else raw
    return Problem(raw=raw, data=data, beta_star=beta_star, spectral_norm=summary.spectral_norm,
                   mu=summary.mu, schedule=resolve_schedule(cfg.schedule, data))


def build_assignment(kind: Scheme, problem: Problem, n: int, d: float, seed: int) -> Assignment:
    X = problem.raw.X
    m = X.shape[0]
    if kind in (Scheme.SGC, Scheme.SGC_SEND_ALL):
        return assign_replicated(replication_degrees(X, d, n), n, seed)
    dd = int(round(d))
    if kind is Scheme.BGC:
        return assign_replicated(constant_profile(m, dd), n, seed)
    if kind is Scheme.ERASUREHEAD:
        return assign_fractional_repetition(m, n, dd)
    return assign_partition(m, n)


def assignment_seed(master_seed: int, run: int) -> int:
    return seeding.derive(master_seed, seeding.ASSIGNMENT, run)


def straggler_seed(master_seed: int, p: float, nu: int, run: int) -> int:
    return seeding.derive(master_seed, seeding.STRAGGLER, p, nu, run)


# -- running -------------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    scheme: str
    p: float
    nu: int
    run: int


@dataclass
class SummaryRow:
    scheme: str
    p: float
    nu: int
    mean_final_error: float
    mean_floor_error: float
    runs: int
    failed: int
    mean_trace: np.ndarray = field(repr=False)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    summary: list
    failures: list  # (Cell, iteration)
    problem: Problem


def error_floor(trace, window: int = 100) -> float:
    """Mean of the last ``window`` entries of an error trace."""
    errors = np.asarray(getattr(trace, "errors", trace), dtype=float)
    if errors.size == 0:
        raise ValueError("empty trace")
    if window < 1 or window > errors.size:
        raise ValueError(f"window={window} must lie in [1, {errors.size}]")
    return float(np.mean(errors[-window:]))


def cells(cfg: ExperimentConfig) -> list[Cell]:
    return [
        Cell(s, p, nu, r)
        for s in cfg.schemes
        for p in cfg.p_values
        for nu in cfg.nu_values
        for r in range(cfg.repetitions)
    ]


def _columns(cfg: ExperimentConfig, problem: Problem, batch: Sequence[Cell], cache: dict) -> list[Column]:
    ell = problem.data.ell
    cols = []
    for c in batch:
        kind = Scheme.parse(c.scheme)
        key = (kind, c.run)
        if key not in cache:
            cache[key] = build_assignment(kind, problem, cfg.n, cfg.d, assignment_seed(cfg.master_seed, c.run))
        model = StragglerModel(p=c.p, nu=c.nu, n=cfg.n, seed=straggler_seed(cfg.master_seed, c.p, c.nu, c.run))
        spec = SchemeSpec(kind=kind, schedule=problem.schedule, p_assumed=c.p, pooled_send_all=cfg.pooled_send_all)
        cols.append(Column(spec, cache[key], model, np.zeros(ell)))
    return cols


def run_experiment(cfg: ExperimentConfig, threads: int = 1, problem: Problem | None = None) -> ExperimentResult:
    """Run every (scheme, p, nu, run) cell and summarize.

    Cells are packed into batches of ``cfg.batch_columns`` in a fixed order, so
    the output does not depend on ``threads``.
    """
    if problem is None:
        problem = prepare_problem(cfg)
    todo = cells(cfg)
    batches = [todo[i : i + cfg.batch_columns] for i in range(0, len(todo), cfg.batch_columns)]
    cache: dict = {}
    # assignments are built up front so worker threads only read the cache
    batch_cols = [_columns(cfg, problem, b, cache) for b in batches]

    def work(k):
        log.info("batch %d/%d: %d runs x %d iterations", k + 1, len(batches), len(batches[k]), cfg.T)
        return simulate(problem.data, batch_cols[k], problem.beta_star, cfg.T, cfg.projection)

    if threads > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(len(batches))))
    else:
        results = [work(k) for k in range(len(batches))]

    traces, failures = [], []
    for batch, res in zip(batches, results):
        for c, errs, div in zip(batch, res.errors, res.diverged_at):
            if div is not None:
                failures.append((c, div))
                log.warning("divergence: %s p=%g nu=%d run=%d at iteration %d", c.scheme, c.p, c.nu, c.run, div)
                continue
            traces.append(RunTrace(scheme=c.scheme, p=c.p, nu=c.nu, run=c.run, errors=errs))
    return ExperimentResult(cfg, traces, summarize(traces, cfg.floor_window, failures), failures, problem)


def summarize(traces: Sequence[RunTrace], window: int = 100, failures=()) -> list[SummaryRow]:
    groups: dict = {}
    for tr in traces:
        groups.setdefault((tr.scheme, tr.p, tr.nu), []).append(tr)
    failed: dict = {}
    for c, _ in failures:
        key = (c.scheme, c.p, c.nu)
        failed[key] = failed.get(key, 0) + 1
        groups.setdefault(key, [])
    rows = []
    for key in sorted(groups):
        trs = sorted(groups[key], key=lambda t: t.run)
        if trs:
            finals = np.array([t.errors[-1] for t in trs])
            floors = np.array([error_floor(t, min(window, len(t.errors))) for t in trs])
            mean_trace = np.mean(np.stack([t.errors for t in trs]), axis=0)
            rows.append(SummaryRow(*key, float(finals.mean()), float(floors.mean()), len(trs), failed.get(key, 0), mean_trace))
        else:
            rows.append(SummaryRow(*key, math.nan, math.nan, 0, failed.get(key, 0), np.array([])))
    return rows


def summary_lookup(summary: Sequence[SummaryRow]) -> dict:
    return {(r.scheme, r.p, r.nu): r for r in summary}


# -- output ------------------------------------------------------------------------


def _g(x: float) -> str:
    return f"{x:.17g}"


def write_traces(traces: Sequence[RunTrace], summary: Sequence[SummaryRow], out_dir, trace_every: int = 1) -> tuple[Path, Path]:
    """Write ``traces.csv`` and ``summary.csv`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        tpath, spath = out / "traces.csv", out / "summary.csv"
        with tpath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "p", "nu", "run", "iteration", "error"])
            for tr in sorted(traces, key=lambda t: (t.scheme, t.p, t.nu, t.run)):
                last = len(tr.errors) - 1
                for it, e in enumerate(tr.errors):
                    if it % trace_every == 0 or it == last:
                        w.writerow([tr.scheme, _g(tr.p), tr.nu, tr.run, it, _g(e)])
        with spath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "p", "nu", "mean_final_error", "mean_floor_error"])
            for r in sorted(summary, key=lambda r: (r.scheme, r.p, r.nu)):
                w.writerow([r.scheme, _g(r.p), r.nu, _g(r.mean_final_error), _g(r.mean_floor_error)])
    except OSError as exc:
        raise OSError(f"cannot write traces to {out}: {exc}") from exc
    return tpath, spath


def read_traces(path) -> list[RunTrace]:
    groups: dict = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["scheme"], float(row["p"]), int(row["nu"]), int(row["run"]))
            groups.setdefault(key, []).append((int(row["iteration"]), float(row["error"])))
    out = []
    for (s, p, nu, run), pts in sorted(groups.items()):
        pts.sort()
        out.append(RunTrace(scheme=s, p=p, nu=nu, run=run, errors=np.array([e for _, e in pts])))
    return out


# -- empirical checks of the convergence bounds -----------------------------------


@dataclass
class BoundCheck:
    T: int
    bound: float
    mean_sq_error: float
    std_err: float
    runs: int
    inputs: bounds.BoundInputs

    @property
    def holds(self) -> bool:
        """Bound respected up to three standard errors of the Monte-Carlo mean."""
        return self.mean_sq_error - 3.0 * self.std_err <= self.bound


def _replicated_columns(problem_X, data, kind, n, d, p, runs, seed, schedule, ell, profile=None):
    cols = []
    for r in range(runs):
        prof = profile if profile is not None else replication_degrees(problem_X, d, n)
        a = assign_replicated(prof, n, seeding.derive(seed, seeding.ASSIGNMENT, r))
        model = StragglerModel(p=p, nu=1, n=n, seed=seeding.derive(seed, seeding.STRAGGLER, p, 1, r))
        cols.append(Column(SchemeSpec(kind, schedule, p), a, model, np.zeros(ell)))
    return cols


def l2_bound_check(
    m: int = 50,
    ell: int = 5,
    n: int = 20,
    p: float = 0.2,
    epsilon: float = 0.1,
    runs: int = 200,
    seed: int = seeding.DEFAULT_SEED,
) -> BoundCheck:
    """Mean ``||beta_T - beta*||^2`` of SGC on a consistent unit-row system vs the l2 bound."""
    raw = generate_synthetic(
        SynthConfig(m=m, ell=ell, feature_std=1.0, label_noise_std=0.0, unit_rows=True,
                    seed=seeding.derive(seed, seeding.DATA))
    )
    spec = incoherence_mu(raw.X)
    beta_star = least_squares_optimum(raw.X, raw.y)
    odds = p / (1 - p)
    d = max(2, math.ceil(8 * spec.mu * odds))
    T = math.ceil(2 * math.log(1 / epsilon**2))
    schedule = bounds.engine_l2_schedule(epsilon, spec.spectral_norm, m)
    cols = _replicated_columns(raw.X, raw, Scheme.SGC, n, d, p, runs, seed, schedule, ell)
    profile = cols[0].assignment.degrees
    res = simulate(raw, cols, beta_star, T)
    sq = res.errors[:, -1] ** 2
    resid = raw.X @ beta_star - raw.y
    inputs = bounds.BoundInputs(
        T=T, p=p, n=n, m=m, epsilon=epsilon, d=profile.avg_degree, mu=spec.mu,
        residual_norm_sq=float(resid @ resid), spectral_norm=spec.spectral_norm,
        beta0_err_sq=float(beta_star @ beta_star), d_min=profile.d_min,
    )
    return BoundCheck(T, bounds.thm3_bound(inputs), float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(runs)), runs, inputs)


def strongly_convex_bound_check(
    T_grid: Sequence[int] = (500, 1000, 2000),
    m: int = 50,
    ell: int = 5,
    n: int = 10,
    d: float = 2,
    p: float = 0.5,
    runs: int = 200,
    label_noise_std: float = 1.0,
    seed: int = seeding.DEFAULT_SEED,
) -> list[BoundCheck]:
    """Projected SGC with ``gamma_t = 1/(lambda t)`` vs the strongly convex bound.

    ``lambda`` is the smallest eigenvalue of ``X^T X`` and the feasible set is the
    ball of radius ``2 ||beta*||`` (which contains both ``beta*`` and ``beta_0 = 0``).
    One run of ``max(T_grid)`` iterations is read off at every ``T`` in the grid.
    """
    raw = generate_synthetic(
        SynthConfig(m=m, ell=ell, feature_std=1.0, label_noise_std=label_noise_std,
                    seed=seeding.derive(seed, seeding.DATA))
    )
    beta_star = least_squares_optimum(raw.X, raw.y)
    lam = min_eigenvalue(raw.X)
    radius = 2.0 * float(np.linalg.norm(beta_star))
    C_sq = bounds.gradient_bound_sq(raw.X, raw.y, radius)
    schedule = bounds.engine_inverse_lambda_schedule(lam, m)
    profile = replication_degrees(raw.X, d, n)
    cols = _replicated_columns(raw.X, raw, Scheme.SGC, n, d, p, runs, seed, schedule, ell, profile=profile)
    Tmax = max(T_grid)
    res = simulate(raw, cols, beta_star, Tmax, ProjectionSpec(radius))
    out = []
    for T in T_grid:
        sq = res.errors[:, T] ** 2
        inputs = bounds.BoundInputs(T=T, p=p, n=n, m=m, lam=lam, C_sq=C_sq, d_min=profile.d_min, d=profile.avg_degree)
        out.append(BoundCheck(T, bounds.thm4_bound(inputs), float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(runs)), runs, inputs))
    return out
