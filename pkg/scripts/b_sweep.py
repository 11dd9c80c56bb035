"""Presample-size sweep on the MNIST subset: runs configs/mnist5k_b_sweep.toml
(each B paired with its guaranteed-speedup threshold) and prints the summary.

    python scripts/b_sweep.py [--output runs/mnist5k_b_sweep]
"""

import argparse
from pathlib import Path

from issgd.config import load_config
from issgd.experiments import run_experiment, write_summary

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "mnist5k_b_sweep.toml"


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--config", default=str(CONFIG))
    parser.add_argument("--output", default=None)
    args = parser.parse_args()

    cfg = load_config(args.config)
    output = Path(args.output or cfg.output)
    summary = run_experiment(cfg, output, Path(args.config).resolve().parent)
    write_summary(summary, output / "summary.json")
    for label, s in summary["arms"].items():
        print(f"{label}: loss {s['final_train_loss']:.4e}  cost units {s['cost_units']}  "
              f"importance iterations {s['importance_iterations']}")


if __name__ == "__main__":
    main()
