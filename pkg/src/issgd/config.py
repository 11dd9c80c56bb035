"""Experiment configuration files (TOML).

A config has top-level keys ``output``, ``arms``, ``b_sweep``, ``loss`` and
sections ``[dataset]``, ``[model]``, ``[train]``, ``[probe]`` and
``[correlate]``. See ``configs/`` for complete examples.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .trainer import TrainConfig
from .variance import guaranteed_speedup_threshold


class ConfigError(ValueError):
    pass


@dataclass
class DatasetSpec:
    kind: str = "blobs"  # idx | csv | blobs | linreg
    images: str | None = None
    labels: str | None = None
    path: str | None = None
    target_columns: int = 1
    classification: bool = True
    standardize: bool = False
    K: int = 3
    per_class: int = 100
    d: int = 2
    spread: float = 1.0
    N: int = 1000
    noise: float = 0.1
    heterogeneity: float = 1.0
    seed: int = 0
    subset: int | None = None


@dataclass
class ModelSpec:
    hidden: list[int] = field(default_factory=lambda: [32])
    activation: str = "relu"
    bias: bool = True
    init_seed: int = 0


@dataclass
class ProbeSpec:
    B: int = 1024
    b: int = 128
    repeats: int = 10
    arms: list[str] = field(
        default_factory=lambda: ["uniform", "loss", "upper-bound", "gradient-norm"]
    )
    checkpoints: list[int] = field(default_factory=lambda: [0, 1000, 2000])
    train_score_kind: str = "uniform-only"
    checkpoint: str | None = None
    seed: int = 0


@dataclass
class CorrelateSpec:
    samples: int = 1024
    train_iterations: int = 2000
    train_score_kind: str = "uniform-only"
    checkpoint: str | None = None
    seed: int = 0


@dataclass
class ExperimentConfig:
    train: TrainConfig
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    probe: ProbeSpec = field(default_factory=ProbeSpec)
    correlate: CorrelateSpec = field(default_factory=CorrelateSpec)
    arms: list[str] = field(default_factory=lambda: ["uniform-only", "upper-bound"])
    b_sweep: list[int] = field(default_factory=list)
    output: str = "runs/experiment"
    tau_th_auto: bool = False  # recompute the guaranteed-speedup threshold per presample size

    def arm_configs(self) -> list[tuple[str, TrainConfig]]:
        """One (label, TrainConfig) per arm and presample size."""
        sizes = self.b_sweep or [self.train.B]
        out = []
        for i, arm in enumerate(self.arms):
            for B in sizes:
                label = arm if not self.b_sweep else f"{arm}-B{B}"
                tau_th = guaranteed_speedup_threshold(B, self.train.b) if self.tau_th_auto else self.train.tau_th
                cfg = replace(
                    self.train, score_kind=arm, B=B, tau_th=tau_th, seed=arm_seed(self.train.seed, i)
                )
                out.append((label, cfg))
        return out


def arm_seed(seed: int, arm_index: int) -> int:
    """Independent sampling stream per arm, derived from the run seed."""
    return int(np.random.SeedSequence([seed, arm_index]).generate_state(1, np.uint64)[0])


def _build(cls, data: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return cls(**data)


def _tau_threshold(value, B: int, b: int) -> float:
    if isinstance(value, (int, float)):
        return float(value)
    if value == "auto":
        return guaranteed_speedup_threshold(B, b)
    if value in ("inf", "infinity"):
        return math.inf
    raise ConfigError(f"tau_th must be a number, 'auto' or 'inf', got {value!r}")


def parse_config(data: dict) -> ExperimentConfig:
    data = dict(data)
    train = dict(data.pop("train", {}))
    if "loss" in data:
        train.setdefault("loss_kind", data.pop("loss"))
    data["tau_th_auto"] = train.get("tau_th") == "auto"
    if "tau_th" in train:
        train["tau_th"] = _tau_threshold(train["tau_th"], train.get("B", 128), train.get("b", 32))
    if "lr_schedule" in train:
        train["lr_schedule"] = [tuple(p) for p in train["lr_schedule"]]
    try:
        cfg = ExperimentConfig(
            train=_build(TrainConfig, train, "train"),
            dataset=_build(DatasetSpec, data.pop("dataset", {}), "dataset"),
            model=_build(ModelSpec, data.pop("model", {}), "model"),
            probe=_build(ProbeSpec, data.pop("probe", {}), "probe"),
            correlate=_build(CorrelateSpec, data.pop("correlate", {}), "correlate"),
            **data,
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.arms:
        raise ConfigError("at least one arm is required")
    cfg.arm_configs()  # validates every arm/B combination
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return parse_config(data)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
