"""Building blocks shared by the CLI and the scripts.

Config-driven construction and multi-arm training live next to the
desk-scale experiments behind the acceptance suite."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import sampling
from .config import DatasetSpec, ExperimentConfig, ModelSpec
from .datasets import Dataset, load_csv, load_idx, synth_blobs, synth_linreg
from .nn import Layer, Network, glorot_init
from .trainer import MetricsRecord, TrainConfig, evaluate, train

REPO_ROOT = Path(__file__).resolve().parents[2]
MNIST_IMAGES = REPO_ROOT / "data" / "mnist5k-images-idx3-ubyte.gz"
MNIST_LABELS = REPO_ROOT / "data" / "mnist5k-labels-idx1-ubyte.gz"


def build_dataset(spec: DatasetSpec, base: Path | None = None) -> Dataset:
    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() or base is None or p.exists() else base / p

    if spec.kind == "idx":
        data = load_idx(resolve(spec.images), resolve(spec.labels))
    elif spec.kind == "csv":
        data = load_csv(resolve(spec.path), spec.target_columns, spec.classification, spec.standardize)
    elif spec.kind == "blobs":
        data = synth_blobs(spec.K, spec.per_class, spec.d, spec.spread, spec.seed)
    elif spec.kind == "linreg":
        data = synth_linreg(spec.N, spec.d, spec.noise, spec.seed, heterogeneity=spec.heterogeneity).data
    else:
        raise ValueError(f"unknown dataset kind {spec.kind!r}")
    if spec.subset is not None and spec.subset < len(data):
        idx = np.sort(sampling.make_rng(spec.seed).choice(len(data), spec.subset, replace=False))
        data = data.subset(idx)
    return data


def output_width(data: Dataset, loss_kind: str) -> int:
    if loss_kind == "softmax_ce":
        return int(data.num_classes)
    return 1 if data.targets.ndim == 1 else data.targets.shape[1]


def build_network(spec: ModelSpec, data: Dataset, loss_kind: str) -> Network:
    dims = [data.dim, *spec.hidden, output_width(data, loss_kind)]
    return glorot_init(dims, spec.init_seed, spec.activation, spec.bias)


def mnist_subset(n: int | None = None) -> Dataset:
    data = load_idx(MNIST_IMAGES, MNIST_LABELS)
    if n is not None and n < len(data):
        data = data.subset(np.sort(sampling.make_rng(0).choice(len(data), n, replace=False)))
    return data


def run_metadata(label: str, config: TrainConfig) -> dict:
    return {
        "arm": label,
        "rng": sampling.RNG_NAME,
        "seed": config.seed,
        "config": asdict(config),
    }


def meta_path(jsonl_path: Path) -> Path:
    return jsonl_path.with_suffix(".meta.json")


def run_arm(
    label: str,
    config: TrainConfig,
    network: Network,
    train_set: Dataset,
    eval_set: Dataset | None = None,
    jsonl_path: Path | None = None,
) -> list[MetricsRecord]:
    """Train one arm; with ``jsonl_path`` each record is appended as it is produced.

    The JSONL holds only metrics records. Run metadata goes to a
    ``.meta.json`` file next to it.
    """
    records = []
    fh = None
    if jsonl_path is not None:
        jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        write_summary(run_metadata(label, config), meta_path(jsonl_path))
        fh = open(jsonl_path, "w")
    try:
        for rec in train(config, network, train_set, eval_set):
            records.append(rec)
            if fh is not None:
                fh.write(json.dumps(rec.to_dict()) + "\n")
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return records


def _jsonable(obj):
    """Copy of ``obj`` that strict JSON accepts: non-finite floats become strings."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run_experiment(cfg: ExperimentConfig, output: Path, base: Path | None = None) -> dict:
    """Every arm on the same data and the same initial network; returns the summary."""
    data = build_dataset(cfg.dataset, base)
    summary = {"arms": {}}
    for label, arm_cfg in cfg.arm_configs():
        net = build_network(cfg.model, data, arm_cfg.loss_kind)
        eval_set = data if arm_cfg.eval_every else None
        recs = run_arm(label, arm_cfg, net, data, eval_set, output / f"{label}.jsonl")
        final_loss, final_error = evaluate(net, data, arm_cfg.loss_kind)
        last = recs[-1]
        summary["arms"][label] = {
            "final_train_loss": final_loss,
            "final_train_error": final_error,
            "iterations": last.iteration,
            "importance_iterations": sum(r.mode == "importance" for r in recs),
            "forward_count": last.forward_count,
            "backward_count": last.backward_count,
            "cost_units": last.cost_units,
            "final_tau": last.tau,
        }
    return summary


def write_summary(summary: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    # json cannot encode inf thresholds; strings keep the file valid
    path.write_text(json.dumps(_jsonable(summary), indent=2, allow_nan=False) + "\n")


# desk-scale experiment presets ------------------------------------------------

MNIST_HIDDEN = [128, 128]


@dataclass
class SpeedupResult:
    seed: int
    uniform_curve: np.ndarray  # columns: iteration, cost units, full training loss
    importance_curve: np.ndarray
    importance_iterations: int

    @property
    def final_ratio(self) -> float:
        return self.importance_curve[-1, 2] / self.uniform_curve[-1, 2]

    def cost_dominance(self, points: int = 50) -> tuple[bool, np.ndarray]:
        """Compare both curves on a common cost grid over the last third of the
        cost range both runs cover; returns (dominates, loss ratios)."""
        cu, lu = self.uniform_curve[:, 1], self.uniform_curve[:, 2]
        ci, li = self.importance_curve[:, 1], self.importance_curve[:, 2]
        top = min(cu[-1], ci[-1])
        grid = np.linspace(top * 2 / 3, top, points)
        ratios = np.interp(grid, ci, li) / np.interp(grid, cu, lu)
        return bool(np.all(ratios <= 1.0)), ratios


def _loss_curve(records: list[MetricsRecord]) -> np.ndarray:
    return np.array(
        [(r.iteration, r.cost_units, r.eval_loss) for r in records if r.eval_loss is not None]
    )


def speedup_run(
    data: Dataset,
    seed: int,
    config: TrainConfig,
    hidden=MNIST_HIDDEN,
    arms=("uniform-only", "upper-bound"),
) -> SpeedupResult:
    curves = {}
    imp = 0
    for i, arm in enumerate(arms):
        net = glorot_init([data.dim, *hidden, data.num_classes], seed, "relu")
        cfg = replace(config, score_kind=arm, seed=1000 * seed + i)
        recs = run_arm(arm, cfg, net, data, data)
        curves[arm] = _loss_curve(recs)
        if arm != "uniform-only":
            imp = sum(r.mode == "importance" for r in recs)
    return SpeedupResult(seed, curves[arms[0]], curves[arms[1]], imp)


def train_mnist_probe_network(data: Dataset, iterations: int = 2000, seed: int = 0) -> Network:
    """The partially trained 784-128-128-10 network used by the score probes:
    plain momentum SGD (b=32, lr 0.05, momentum 0.9) from a seeded Glorot init."""
    net = glorot_init([data.dim, *MNIST_HIDDEN, data.num_classes], seed, "relu")
    cfg = TrainConfig(b=32, learning_rate=0.05, momentum=0.9, max_iterations=iterations,
                      score_kind="uniform-only", seed=seed)
    for _ in train(cfg, net, data):
        pass
    return net


@dataclass
class ConvexProbeResult:
    iterations: np.ndarray  # measurement points (multiples of ``every``)
    mean_sq_distance: dict  # arm -> mean over seeds of |theta_t - theta*|^2 at each point


def convex_probe(
    seeds: int = 50,
    iterations: int = 2000,
    every: int = 100,
    arms=("uniform-only", "gradient-norm"),
    N: int = 1000,
    d: int = 10,
    noise: float = 0.5,
    heterogeneity: float = 0.5,
    data_seed: int = 0,
    config: TrainConfig | None = None,
) -> ConvexProbeResult:
    """Mean squared distance to the least-squares optimum along training.

    A single bias-free linear layer starts at zero on a ``synth_linreg``
    problem; each arm runs once per seed with the same sampling seed.
    """
    problem = synth_linreg(N, d, noise, data_seed, heterogeneity=heterogeneity)
    if config is None:
        config = TrainConfig(B=64, b=8, tau_th=1.0, learning_rate=0.005,
                             loss_kind="squared_error", max_iterations=iterations)
    points = np.arange(every, iterations + 1, every)
    totals = {arm: np.zeros(points.size) for arm in arms}
    for seed in range(seeds):
        for arm in arms:
            net = Network([Layer(np.zeros((problem.theta_star.shape[0], d)))])
            cfg = replace(config, score_kind=arm, seed=seed, max_iterations=iterations)
            k = 0
            for rec in train(cfg, net, problem.data):
                if rec.iteration % every == 0:
                    totals[arm][k] += np.sum((net.layers[0].weights - problem.theta_star) ** 2)
                    k += 1
    return ConvexProbeResult(points, {arm: t / seeds for arm, t in totals.items()})
