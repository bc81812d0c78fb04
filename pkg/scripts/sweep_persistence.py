"""SGC error trace and floor vs straggler persistence nu at p = 0.7.

Usage: python scripts/sweep_persistence.py [--out DIR] [--threads N]
"""
import argparse
import time

from sgcsim.cli import load_config, shipped_config
from sgcsim.experiments import run_experiment, write_traces


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/persistence")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    cfg, _ = load_config(shipped_config("paper_fig4.cfg"))
    t0 = time.perf_counter()
    res = run_experiment(cfg, threads=args.threads)
    write_traces(res.traces, res.summary, args.out, trace_every=cfg.trace_every)
    print(f"{'nu':>6}{'final':>14}{'floor':>14}")
    for r in res.summary:
        print(f"{r.nu:>6d}{r.mean_final_error:>14.3e}{r.mean_floor_error:>14.3e}")
    print(f"{time.perf_counter() - t0:.1f}s, traces in {args.out}")


if __name__ == "__main__":
    main()
