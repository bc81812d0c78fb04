"""Final error of every scheme vs straggle probability (iid stragglers).

Usage: python scripts/sweep_straggle_probability.py [--out DIR] [--threads N]
"""
import argparse
import time

from sgcsim.cli import load_config, shipped_config
from sgcsim.experiments import run_experiment, write_traces


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/straggle_probability")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg, _ = load_config(shipped_config("paper_fig2.cfg"))
    t0 = time.perf_counter()
    res = run_experiment(cfg, threads=args.threads)
    write_traces(res.traces, res.summary, args.out, trace_every=cfg.trace_every)
    table = {(r.scheme, r.p): r.mean_final_error for r in res.summary}
    print(f"{'p':>5}" + "".join(f"{s:>18}" for s in cfg.schemes))
    for p in cfg.p_values:
        print(f"{p:>5g}" + "".join(f"{table[(s, p)]:>18.3e}" for s in cfg.schemes))
    print(f"{time.perf_counter() - t0:.1f}s, traces in {args.out}")


if __name__ == "__main__":
    main()
