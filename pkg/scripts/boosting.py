"""Does proximal refinement improve a classical ranker's upset_simple?

    python scripts/boosting.py --baselines syncrank springrank --instances 20
"""

from __future__ import annotations

import argparse
import itertools

from rankforge.baselines import run_baseline
from rankforge.graph import comparison_matrices
from rankforge.metrics import upset_simple
from rankforge.model import TrainConfig, VariantSpec, train
from rankforge.synth import EROConfig, generate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--baselines", nargs="+", default=["syncrank", "springrank"])
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--n", type=int, default=60)
    ap.add_argument("--p", type=float, nargs="+", default=[0.2, 0.5, 1.0])
    ap.add_argument("--eta", type=float, nargs="+", default=[0.0, 0.1, 0.3, 0.5])
    ap.add_argument("--epochs", type=int, default=1000)
    args = ap.parse_args()
    cfg = TrainConfig(max_epochs=args.epochs)
    design = list(itertools.islice(itertools.cycle(itertools.product(args.p, args.eta)), args.instances))

    print("baseline\tp\teta\tseed\tbefore\tafter\tdelta")
    for base in args.baselines:
        wins = 0
        for i, (p, eta) in enumerate(design):
            g, _ = generate(EROConfig(n=args.n, p=p, eta=eta, seed=100 + i))
            before = upset_simple(comparison_matrices(g), run_baseline(base, g))
            after = train(g, VariantSpec("proximal_baseline", baseline=base), cfg, seed=i).metrics["upset_simple"]
            wins += after < before
            print(f"{base}\t{p:g}\t{eta:g}\t{100 + i}\t{before:.4f}\t{after:.4f}\t{after - before:+.4f}", flush=True)
        print(f"# {base}: strictly improved on {wins}/{len(design)}")


if __name__ == "__main__":
    main()
