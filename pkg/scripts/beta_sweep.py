"""Escape exponent against trap depth at fixed bias, next to min(1, xi/beta).

    python scripts/beta_sweep.py --out results/beta_sweep --replicas 16
"""

import argparse
import math

from trapwalk.config import RunConfig
from trapwalk.estimators import TimeGrid
from trapwalk.experiments import cmd_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/beta_sweep")
    ap.add_argument("--replicas", type=int, default=16)
    ap.add_argument("--t-max", type=float, default=1e6)
    ap.add_argument("--betas", type=float, nargs="+", default=[0.3, 0.6, 0.9, 1.2, 1.5, 1.8, 2.4, 3.0])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    g = TimeGrid.spanning(1e2, args.t_max, 8)
    cfg = RunConfig(lam=1.0, sweep_beta=args.betas, replicas=args.replicas, max_time=args.t_max,
                    grid_t0=g.t0, grid_ratio=g.ratio, grid_count=g.count, out_dir=args.out)
    rows = cmd_sweep(cfg, args.out, args.workers)
    xi = -math.log(cfg.p)
    print(f"xi = {xi:.4f}")
    print(f"{'beta':>6} {'theory':>8} {'fitted':>8} {'stderr':>8} {'speed':>9}")
    for r in rows:
        print(f"{r['beta']:6.2f} {r['theory_exponent']:8.3f} {r['exponent']:8.3f} {r['exponent_stderr']:8.3f} "
              f"{r['speed_1']:9.5f}")


if __name__ == "__main__":
    main()
