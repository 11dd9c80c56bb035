"""Normalized gradient distance per sampling arm along a uniform SGD run on
the MNIST subset (presample 1024, resample 128, 10 resamples per point).

    python scripts/variance_probe_curve.py [--iterations 2000] [--every 250] [--out runs/variance_probe.json]
"""

import argparse
import json
from pathlib import Path

from issgd import probes
from issgd.experiments import MNIST_HIDDEN, mnist_subset
from issgd.nn import glorot_init
from issgd.sampling import make_rng
from issgd.trainer import TrainConfig, train

ARMS = ["uniform", "loss", "upper-bound", "gradient-norm"]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--every", type=int, default=250)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/variance_probe.json")
    args = parser.parse_args()

    data = mnist_subset()
    net = glorot_init([data.dim, *MNIST_HIDDEN, data.num_classes], args.seed, "relu")
    cfg = TrainConfig(b=32, learning_rate=0.05, momentum=0.9, max_iterations=args.iterations,
                      score_kind="uniform-only", seed=args.seed)
    rng = make_rng(args.seed + 1)
    rows = []

    def probe(iteration):
        dist = probes.variance_probe(net, data, "softmax_ce", ARMS, 1024, 128, 10, rng)
        rows.append({"iteration": iteration, **dist})
        print(f"{iteration:6d} " + " ".join(f"{arm}={dist[arm]:.3f}" for arm in ARMS), flush=True)

    probe(0)
    for rec in train(cfg, net, data):
        if rec.iteration % args.every == 0:
            probe(rec.iteration)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
