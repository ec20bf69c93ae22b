"""Tail rate of d=2 cluster sizes from origin-cluster samples.

Prints the fitted rate for several p and the tail points it used.

    python scripts/xi_d2.py --samples 1000000 --p 0.1 0.2 0.3
"""

import argparse

import numpy as np

from trapwalk.env import Params, sample_cluster_sizes
from trapwalk.estimators import estimate_xi


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=10**6)
    ap.add_argument("--p", type=float, nargs="+", default=[0.1, 0.2, 0.3])
    ap.add_argument("--seed", type=int, default=2020)
    args = ap.parse_args()

    for p in args.p:
        c = sample_cluster_sizes(Params(d=2, p=p, ell=(1.0, 0.0), seed=args.seed), args.samples)
        est = estimate_xi(c)
        print(f"p={p:.3f}  xi_hat={est.xi:.4f} +- {est.stderr:.4f}  window={est.window}  "
              f"points={est.points}  ln-prefactor={est.log_prefactor:.3f}")
        n = np.arange(est.window[0], est.window[1] + 1)
        tail = np.array([(c >= k).mean() for k in n])
        print("   n:      " + " ".join(f"{k:8d}" for k in n[:10]))
        print("   P(C>=n): " + " ".join(f"{v:8.2e}" for v in tail[:10]))


if __name__ == "__main__":
    main()
