"""Alignment of the unrolled solver with the dense Fiedler vector across step sizes.

    python scripts/step_size_study.py --steps 500 --trials 50
"""

from __future__ import annotations

import argparse

import numpy as np

from rankforge.graph import graph_laplacian
from rankforge.unfold import ProximalConfig, build_reducer, proximal_steps


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--scales", type=float, nargs="+", default=[0.2, 1.0, 5.0, 25.0],
                    help="alpha = scale / (n - 1)")
    args = ap.parse_args()

    print("scale\tmin|cos|\tfrac>=0.999")
    for scale in args.scales:
        rng = np.random.default_rng(0)
        cos = []
        for _ in range(args.trials):
            n = int(rng.integers(4, 31))
            B = np.triu(rng.uniform(size=(n, n)), 1)
            L = graph_laplacian(B + B.T)
            fiedler = np.linalg.eigh(L)[1][:, 1]
            cfg = ProximalConfig(gamma_steps=args.steps, alphas=(scale / (n - 1),) * args.steps)
            cos.append(abs(proximal_steps(rng.normal(size=n), L, build_reducer(n), cfg) @ fiedler))
        cos = np.array(cos)
        print(f"{scale:g}\t{cos.min():.4f}\t{np.mean(cos >= 0.999):.2f}", flush=True)


if __name__ == "__main__":
    main()
