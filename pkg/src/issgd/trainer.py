"""Importance-sampling SGD loop with uniform warmup and tau-gated switching.

Each iteration is one of two branches:

* uniform: draw ``b`` points uniformly and take an unweighted SGD step; the
  forward pass of that step also scores the points, and their distribution
  feeds the tau estimator;
* importance (taken once the smoothed tau exceeds ``tau_th``): score a
  uniform presample of ``B`` points, then resample ``b`` of them with
  replacement in proportion to the scores and step with weights ``1/(B g)``.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from . import sampling
from .datasets import Dataset, uniform_batch
from .losses import check_kind, loss_values, output_gradients, predictions
from .nn import GradientSet, Network, backward, forward, save_network
from .scoring import compute_scores
from .variance import TAU_MODES, TauEstimator, ema_update, should_switch

TRAIN_SCORE_KINDS = ("upper-bound", "loss", "gradient-norm", "uniform-only")


class TrainingAborted(RuntimeError):
    pass


@dataclass
class TrainConfig:
    B: int = 128
    b: int = 32
    tau_th: float = 1.5
    a_tau: float = 0.9
    tau_mode: str = "standard"
    learning_rate: float = 0.05
    momentum: float = 0.0
    weight_decay: float = 0.0
    lr_schedule: list[tuple[int, float]] = field(default_factory=list)
    max_iterations: int = 1000
    seed: int = 0
    score_kind: str = "upper-bound"
    loss_kind: str = "softmax_ce"
    eval_every: int = 0
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None

    def __post_init__(self):
        self.lr_schedule = sorted((int(i), float(m)) for i, m in self.lr_schedule)
        self.loss_kind = check_kind(self.loss_kind)
        if not 1 <= self.b <= self.B:
            raise ValueError(f"need 1 <= b <= B, got b={self.b}, B={self.B}")
        if not self.tau_th >= 1.0:
            raise ValueError("tau_th must be at least 1")
        if not 0.0 <= self.a_tau < 1.0:
            raise ValueError("a_tau must lie in [0, 1)")
        if self.tau_mode not in TAU_MODES:
            raise ValueError(f"unknown tau mode {self.tau_mode!r}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.score_kind not in TRAIN_SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.score_kind!r}")

    def lr_at(self, iteration: int) -> float:
        mult = 1.0
        for start, m in self.lr_schedule:
            if iteration >= start:
                mult = m
        return self.learning_rate * mult


@dataclass
class MetricsRecord:
    iteration: int
    wall_clock_seconds: float
    mode: str
    train_loss: float
    tau: float
    forward_count: int
    backward_count: int
    eval_loss: float | None = None
    eval_error: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def cost_units(self) -> int:
        """Forward pass = 1 unit, backward pass = 2 units."""
        return self.forward_count + 2 * self.backward_count


def zero_velocity(network: Network) -> list[np.ndarray]:
    return [np.zeros_like(p) for p in network.parameters()]


def sgd_step(
    network: Network,
    grads: GradientSet,
    config: TrainConfig,
    velocity: list[np.ndarray],
    iteration: int = 0,
) -> tuple[Network, list[np.ndarray]]:
    """Momentum SGD, updating ``network`` and ``velocity`` in place."""
    if not grads.is_finite():
        raise TrainingAborted(f"non-finite gradient at iteration {iteration}")
    lr = config.lr_at(iteration)
    for param, grad, vel in zip(network.parameters(), grads.arrays(), velocity):
        if param.shape != grad.shape:
            raise ValueError("gradient shape does not match the parameter")
        step = grad + config.weight_decay * param if config.weight_decay else grad
        vel *= config.momentum
        vel += step
        param -= lr * vel
    return network, velocity


def evaluate(
    network: Network, dataset: Dataset, kind: str, chunk: int = 4096
) -> tuple[float, float | None]:
    """Mean loss and error rate over the whole set (error is None for regression)."""
    kind = check_kind(kind)
    n = len(dataset)
    total_loss, wrong = 0.0, 0
    for start in range(0, n, chunk):
        x = dataset.inputs[start : start + chunk]
        y = dataset.targets[start : start + chunk]
        z = forward(network, x).logits
        total_loss += float(loss_values(kind, z, y).sum())
        if kind == "softmax_ce":
            wrong += int(np.sum(predictions(kind, z) != y))
        elif kind == "sigmoid_nll":
            y2 = np.asarray(y, dtype=np.float64).reshape(z.shape)
            wrong += int(np.sum(np.any(predictions(kind, z) != y2, axis=1)))
    error = None if kind == "squared_error" else wrong / n
    return total_loss / n, error


def batch_gradient(network, trace, y, weights, loss_kind: str) -> tuple[float, GradientSet]:
    """Weighted batch loss and ``(1/b) sum_j w_j grad L_j`` from one backward pass.

    The weights are folded into the output gradients before backpropagation.
    """
    weights = np.asarray(weights, dtype=np.float64)
    losses = loss_values(loss_kind, trace.logits, y)
    out = output_gradients(loss_kind, trace.logits, y)
    out *= (weights / len(weights))[:, None]
    return float(np.mean(weights * losses)), backward(network, trace, out)


def _weighted_step(network, trace, y, weights, config, velocity, iteration) -> float:
    train_loss, grads = batch_gradient(network, trace, y, weights, config.loss_kind)
    if not math.isfinite(train_loss):
        raise TrainingAborted(f"non-finite loss at iteration {iteration}")
    sgd_step(network, grads, config, velocity, iteration)
    return train_loss


def train(
    config: TrainConfig,
    network: Network,
    train_set: Dataset,
    eval_set: Dataset | None = None,
) -> Iterator[MetricsRecord]:
    """Run the loop, yielding one record per iteration. ``network`` is updated in place."""
    n = len(train_set)
    if n < 1:
        raise ValueError("empty training set")
    if config.score_kind != "uniform-only" and config.B > n:
        raise ValueError(f"presample size {config.B} exceeds dataset size {n}")
    rng = sampling.make_rng(config.seed)
    velocity = zero_velocity(network)
    est = TauEstimator(tau=0.0, a_tau=config.a_tau, tau_th=config.tau_th, mode=config.tau_mode)
    X, Y = train_set.inputs, train_set.targets
    uniform_only = config.score_kind == "uniform-only"
    score_kind = config.score_kind
    fwd = bwd = 0
    start = time.perf_counter()

    for it in range(config.max_iterations):
        if not uniform_only and should_switch(est):
            pool = uniform_batch(n, config.B, rng)
            pool_trace = forward(network, X[pool])
            fwd += config.B
            scores = compute_scores(score_kind, network, pool_trace, config.loss_kind, Y[pool])
            if score_kind == "gradient-norm":
                bwd += config.B
            plan = sampling.resample(scores, config.b, rng)
            idx = pool[plan.selected_indices]
            trace = forward(network, X[idx])
            train_loss = _weighted_step(
                network, trace, Y[idx], plan.weights, config, velocity, it
            )
            fwd += config.b
            bwd += config.b
            g = plan.probabilities
            mode = "importance"
        else:
            idx = uniform_batch(n, config.b, rng)
            trace = forward(network, X[idx])
            g = None
            if not uniform_only:
                # scored from the update's own forward pass, i.e. pre-update parameters
                scores = compute_scores(score_kind, network, trace, config.loss_kind, Y[idx])
                g = sampling.normalize(scores)
            train_loss = _weighted_step(
                network, trace, Y[idx], np.ones(config.b), config, velocity, it
            )
            fwd += config.b
            bwd += config.b
            mode = "uniform"
        if g is not None:
            est = ema_update(est, g)

        record = MetricsRecord(
            iteration=it + 1,
            wall_clock_seconds=time.perf_counter() - start,
            mode=mode,
            train_loss=train_loss,
            tau=est.tau,
            forward_count=fwd,
            backward_count=bwd,
        )
        last = it + 1 == config.max_iterations
        if eval_set is not None and (last or (config.eval_every and (it + 1) % config.eval_every == 0)):
            record.eval_loss, record.eval_error = evaluate(network, eval_set, config.loss_kind)
        if config.checkpoint_every and config.checkpoint_dir and (it + 1) % config.checkpoint_every == 0:
            ckpt = Path(config.checkpoint_dir)
            ckpt.mkdir(parents=True, exist_ok=True)
            save_network(network, ckpt / f"checkpoint_{it + 1:08d}.json")
        yield record


def run(config, network, train_set, eval_set=None) -> list[MetricsRecord]:
    return list(train(config, network, train_set, eval_set))
