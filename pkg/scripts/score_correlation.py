"""Sampling probabilities from loss and upper-bound scores against the ideal
gradient-norm probabilities, for a network trained on the MNIST subset.

    python scripts/score_correlation.py [--iterations 2000] [--samples 1024] [--out runs/correlation.json]
"""

import argparse
import json
from pathlib import Path

from issgd import probes
from issgd.experiments import mnist_subset, train_mnist_probe_network
from issgd.sampling import make_rng


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--samples", type=int, default=1024)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="runs/correlation.json")
    args = parser.parse_args()

    data = mnist_subset()
    net = train_mnist_probe_network(data, args.iterations, args.seed)
    idx = make_rng(args.seed).choice(len(data), args.samples, replace=False)
    triples = probes.score_triples(net, data.inputs[idx], data.targets[idx], "softmax_ce")
    summary = probes.correlation_summary(triples)
    probs = triples.probabilities()
    print(json.dumps(summary, indent=2))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps({
        "summary": summary,
        "probabilities": {k: v.tolist() for k, v in probs.items()},
    }) + "\n")


if __name__ == "__main__":
    main()
