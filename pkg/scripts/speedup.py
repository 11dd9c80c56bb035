"""Uniform SGD against upper-bound importance sampling on the MNIST subset,
using the recipe in configs/mnist5k.toml. Prints final losses and writes the
full-set loss curves (iteration, cost units, loss) per seed.

    python scripts/speedup.py [--seeds 3] [--iterations 5000] [--out runs/speedup.json]
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from issgd.config import load_config
from issgd.experiments import mnist_subset, speedup_run

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "mnist5k.toml"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--iterations", type=int, default=None)
    parser.add_argument("--config", default=str(CONFIG))
    parser.add_argument("--out", default="runs/speedup.json")
    args = parser.parse_args()

    config = load_config(args.config).train
    if args.iterations:
        config = replace(config, max_iterations=args.iterations)
    data = mnist_subset()
    rows = []
    for seed in range(args.seeds):
        r = speedup_run(data, seed, config)
        dominates, ratios = r.cost_dominance()
        print(f"seed {seed}: uniform {r.uniform_curve[-1, 2]:.3e}  upper-bound {r.importance_curve[-1, 2]:.3e}  "
              f"ratio {r.final_ratio:.3f}  dominance {dominates} (max cost ratio {ratios.max():.3f})  "
              f"importance iterations {r.importance_iterations}", flush=True)
        rows.append({
            "seed": seed,
            "uniform": r.uniform_curve.tolist(),
            "upper-bound": r.importance_curve.tolist(),
            "importance_iterations": r.importance_iterations,
        })
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(rows) + "\n")


if __name__ == "__main__":
    main()
