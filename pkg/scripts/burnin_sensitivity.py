"""How fitted exponents move with the burn-in prefix dropped before regression.

Runs each regime once and refits the same grid samples with several burn-ins,
so differences come from the window alone.

    python scripts/burnin_sensitivity.py --replicas 32
"""

import argparse
import math

import numpy as np

from trapwalk.config import RunConfig
from trapwalk.estimators import TimeGrid, fit_exponent
from trapwalk.experiments import run_replicas

XI = -math.log(0.3)
CASES = [
    ("ballistic", 1.0, 0.5, "limit", 1.0),
    ("subballistic", 1.0, 2 * XI, "limit", 0.5),
    ("subdiffusive d=1", 0.0, 2 * XI, "limsup", 1 / 3),
    ("diffusive", 0.0, 0.5, "limsup", 0.5),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=32)
    ap.add_argument("--t-max", type=float, default=1e6)
    ap.add_argument("--burn-ins", type=float, nargs="+", default=[0.0, 0.5, 1.0, 1.5, 2.0])
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    g = TimeGrid.spanning(1e1, args.t_max, 8)
    print("regime".ljust(18) + "target " + " ".join(f"b={b:<5}" for b in args.burn_ins))
    for name, lam, beta, mode, target in CASES:
        cfg = RunConfig(lam=lam, beta=beta, replicas=args.replicas, max_time=args.t_max, seed=777,
                        grid_t0=g.t0, grid_ratio=g.ratio, grid_count=g.count, estimators=["exponent"])
        outputs, grid = run_replicas(cfg, args.workers)
        pos = np.array([o["members"][0]["grid_pos"] for o in outputs])
        norms = np.sqrt((pos**2).sum(axis=2))
        slopes = [fit_exponent(grid.times, norms, mode == "limsup", b).slope for b in args.burn_ins]
        print(name.ljust(18) + f"{target:6.3f} " + " ".join(f"{s:7.3f}" for s in slopes))


if __name__ == "__main__":
    main()
