"""Command-line entry point.

Configs are YAML mappings with the keys of :meth:`ExperimentConfig.to_dict`.
``--set a.b=value`` overrides a nested key; the value is parsed as YAML, so
``--set p_values=[0.5,0.7]`` and ``--set data.synthetic.m=200`` both work.
The fully resolved config is echoed as the first YAML document of the output.
"""
from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import bounds, seeding
from .assignment import overlap_matrix
from .engine import Column, DivergenceError, Scheme, SchemeSpec, TheoremL2Step, simulate
from .experiments import (
    AutoL2Step,
    ExperimentConfig,
    build_assignment,
    assignment_seed,
    prepare_problem,
    read_traces,
    run_experiment,
    straggler_seed,
    write_traces,
)
from .numerics import min_eigenvalue
from .straggler import StragglerModel

log = logging.getLogger("sgcsim")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def shipped_config(name: str) -> Path:
    """Path of a config bundled with the package, e.g. ``paper_fig2.cfg``."""
    return Path(str(resources.files("sgcsim") / "configs" / name))


def apply_override(tree: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise UsageError(f"--set expects key=value, got {assignment!r}")
    key, _, text = assignment.partition("=")
    parts = key.strip().split(".")
    if not all(parts):
        raise UsageError(f"bad override key {key!r}")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"cannot parse value of {key}: {exc}") from None
    node = tree
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise UsageError(f"override {key}: {part} is not a mapping")
        node = nxt
    node[parts[-1]] = value


def load_config(path, overrides=(), seed=None) -> tuple[ExperimentConfig, dict]:
    """Parse a config file, apply overrides, validate. Returns the config and its raw tree."""
    tree: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            tree = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise UsageError(f"config {path} is not valid YAML: {exc}") from None
        if not isinstance(tree, dict):
            raise UsageError(f"config {path} must be a mapping")
    for ov in overrides:
        apply_override(tree, ov)
    if seed is not None:
        tree["seed"] = seed
    try:
        cfg = ExperimentConfig.from_dict(tree)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from None
    return cfg, tree


def echo_config(cfg: ExperimentConfig, tree: dict, out) -> None:
    resolved = cfg.to_dict()
    if "bounds" in tree:
        resolved["bounds"] = tree["bounds"]
    out.write("# resolved config\n")
    out.write(yaml.safe_dump(resolved, sort_keys=False))
    out.write("---\n")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults to the built-in paper_fig2.cfg sweep)")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=_u64, default=None, help=f"master seed (default {seeding.DEFAULT_SEED})")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = _Parser(prog="sgcsim", description="Straggler-tolerant distributed gradient descent simulator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", parents=[common], help="run one (scheme, p, nu) cell and print the final error")
    run.add_argument("--scheme", default="SGC")
    run.add_argument("--p", type=float, default=None, help="straggle probability (default: first of p_values)")
    run.add_argument("--nu", type=int, default=None, help="persistence (default: first of nu_values)")
    run.add_argument("--run", type=int, default=0, help="repetition index")

    sub.add_parser("sweep", parents=[common], help="run the full config and write traces.csv/summary.csv")
    sub.add_parser("bounds", parents=[common], help="evaluate the convergence bounds for the config")

    insp = sub.add_parser("inspect-assignment", parents=[common], help="print degrees and overlap statistics")
    insp.add_argument("--scheme", default="SGC")
    insp.add_argument("--run", type=int, default=0)
    return ap


def cmd_run(args, cfg: ExperimentConfig, out) -> int:
    kind = Scheme.parse(args.scheme)
    p = cfg.p_values[0] if args.p is None else args.p
    nu = cfg.nu_values[0] if args.nu is None else args.nu
    if not 0 <= p < 1:
        raise UsageError("--p must lie in [0, 1)")
    if nu < 1 or args.run < 0:
        raise UsageError("--nu must be >= 1 and --run >= 0")
    problem = prepare_problem(cfg)
    a = build_assignment(kind, problem, cfg.n, cfg.d, assignment_seed(cfg.master_seed, args.run))
    model = StragglerModel(p=p, nu=nu, n=cfg.n, seed=straggler_seed(cfg.master_seed, p, nu, args.run))
    col = Column(SchemeSpec(kind, problem.schedule, p, cfg.pooled_send_all), a, model, np.zeros(problem.data.ell))
    res = simulate(problem.data, [col], problem.beta_star, cfg.T, cfg.projection)
    if res.diverged_at[0] is not None:
        raise DivergenceError(f"{kind.value} diverged at iteration {res.diverged_at[0]}", res.diverged_at[0])
    out.write(f"scheme={kind.value} p={p:g} nu={nu} run={args.run} T={cfg.T}\n")
    out.write(f"final_error={res.errors[0, -1]:.17g}\n")
    return 0


def cmd_sweep(args, cfg: ExperimentConfig, out) -> int:
    res = run_experiment(cfg, threads=max(1, args.threads))
    tpath, spath = write_traces(res.traces, res.summary, args.out, trace_every=cfg.trace_every)
    out.write(f"{'scheme':<18}{'p':>6}{'nu':>6}{'final':>14}{'floor':>14}{'runs':>6}\n")
    for r in res.summary:
        out.write(f"{r.scheme:<18}{r.p:>6g}{r.nu:>6d}{r.mean_final_error:>14.4e}{r.mean_floor_error:>14.4e}{r.runs:>6d}\n")
    out.write(f"wrote {tpath} and {spath}\n")
    if res.failures:
        for c, it in res.failures:
            sys.stderr.write(f"error: {c.scheme} p={c.p:g} nu={c.nu} run={c.run} diverged at iteration {it}\n")
        return 2
    return 0


def cmd_bounds(args, cfg: ExperimentConfig, tree: dict, out) -> int:
    problem = prepare_problem(cfg)
    X, y = problem.raw.X, problem.raw.y
    m = X.shape[0]
    beta_star = problem.beta_star
    opts = tree.get("bounds") or {}
    if isinstance(cfg.schedule, (TheoremL2Step, AutoL2Step)):
        eps = cfg.schedule.epsilon
    else:
        eps = float(opts.get("epsilon", 0.1))
    prof = build_assignment(Scheme.SGC, problem, cfg.n, cfg.d, assignment_seed(cfg.master_seed, 0)).degrees
    resid = X @ beta_star - y
    radius = cfg.projection.radius if cfg.projection.radius is not None else 2.0 * float(np.linalg.norm(beta_star))
    lam = float(opts["lambda"]) if "lambda" in opts else min_eigenvalue(X)
    C_sq = float(opts["C_sq"]) if "C_sq" in opts else bounds.gradient_bound_sq(X, y, radius)

    empirical = {}
    tpath = Path(args.out) / "traces.csv"
    if tpath.exists():
        for tr in read_traces(tpath):
            if tr.scheme == Scheme.SGC.value:
                empirical.setdefault((tr.p, tr.nu), []).append(tr.errors[-1] ** 2)

    out.write(f"m={m} n={cfg.n} T={cfg.T} epsilon={eps:g} d={prof.avg_degree:.6g} d_min={prof.d_min} "
              f"mu={problem.mu:.6g} ||beta0-beta*||^2={beta_star @ beta_star:.17g} ||r||^2={resid @ resid:.6g} ||X^T X||={problem.spectral_norm:.6g} "
              f"lambda={lam:.6g} C^2={C_sq:.6g}\n")
    for p in cfg.p_values:
        b = bounds.BoundInputs(
            T=cfg.T, p=p, n=cfg.n, m=m, epsilon=eps, d=prof.avg_degree, mu=problem.mu,
            residual_norm_sq=float(resid @ resid), spectral_norm=problem.spectral_norm,
            beta0_err_sq=float(beta_star @ beta_star), lam=lam, C_sq=C_sq, d_min=prof.d_min,
        )
        try:
            bounds.thm3_bound(b, check=True)
            note = ""
        except bounds.HypothesisError as exc:
            note = f"  (outside hypotheses: {exc})"
        t3 = bounds.thm3_bound(b, check=False)
        t4 = bounds.thm4_bound(b)
        line = f"p={p:g} thm3_bound={t3:.17g} thm4_bound={t4:.17g}"
        for nu in cfg.nu_values:
            vals = empirical.get((p, nu))
            if vals:
                line += f" empirical_sq_error[nu={nu}]={float(np.mean(vals)):.6g}"
        out.write(line + note + "\n")
    return 0


def cmd_inspect(args, cfg: ExperimentConfig, out) -> int:
    problem = prepare_problem(cfg)
    kind = Scheme.parse(args.scheme)
    a = build_assignment(kind, problem, cfg.n, cfg.d, assignment_seed(cfg.master_seed, args.run))
    deg = a.degrees
    out.write(f"scheme={kind.value} m={deg.m} n={a.n} avg_degree={deg.avg_degree:.6g} sigma={deg.sigma:.6g} "
              f"d_min={deg.d_min} d_max={int(deg.degrees.max())}\n")
    loads = a.membership.sum(axis=0).astype(int)
    out.write("worker_loads=" + ",".join(str(v) for v in loads) + "\n")
    O = overlap_matrix(a)
    iu = np.triu_indices(deg.m, k=1)
    dd = deg.degrees.astype(float)
    expected = np.outer(dd, dd)[iu] / a.n
    obs = O[iu]
    out.write(f"overlap mean={obs.mean():.6g} expected_mean={expected.mean():.6g} "
              f"max_abs_dev={np.abs(obs - expected).max():.6g}\n")
    out.write("row,degree\n")
    for i, v in enumerate(deg.degrees):
        out.write(f"{i},{int(v)}\n")
    return 0


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        cfg_path = args.config if args.config is not None else shipped_config("paper_fig2.cfg")
        cfg, tree = load_config(cfg_path, args.overrides, args.seed)
    except UsageError as exc:
        sys.stderr.write(f"sgcsim: error: {exc}\n")
        return 1
    except SystemExit as exc:  # --help
        return 0 if not exc.code else 1

    echo_config(cfg, tree, out)
    try:
        if args.command == "run":
            return cmd_run(args, cfg, out)
        if args.command == "sweep":
            return cmd_sweep(args, cfg, out)
        if args.command == "bounds":
            return cmd_bounds(args, cfg, tree, out)
        return cmd_inspect(args, cfg, out)
    except UsageError as exc:
        sys.stderr.write(f"sgcsim: error: {exc}\n")
        return 1
    except DivergenceError as exc:
        sys.stderr.write(f"sgcsim: divergence: {exc}\n")
        return 2
    except (ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        sys.stderr.write(f"sgcsim: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
