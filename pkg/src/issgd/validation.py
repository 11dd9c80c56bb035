"""Oracle checks behind ``issgd validate``.

Each check compares a formula against something computed independently
(finite differences, exhaustive enumeration, Monte-Carlo, direct evaluation)
and returns a :class:`CheckResult` with the worst measured discrepancy.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses, sampling
from .nn import Layer, Network, backward, forward
from .scoring import empirical_rho, gradient_norm_scores, upper_bound_scores
from .variance import (
    instantaneous_tau,
    variance_reduction_closed_form,
    variance_reduction_direct,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    seconds: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = (
            f"[{status}] {self.name}: measured={self.measured:.3e} "
            f"tolerance={self.tolerance:.1e} ({self.seconds:.2f}s)"
        )
        return f"{text} {self.detail}" if self.detail else text


def central_differences(fn: Callable[[np.ndarray], float], theta: np.ndarray, h: float = 1e-5):
    grad = np.empty_like(theta)
    for k in range(theta.size):
        t = theta.copy()
        t[k] += h
        f_plus = fn(t)
        t[k] -= 2 * h
        grad[k] = (f_plus - fn(t)) / (2 * h)
    return grad


def random_mlp(rng: np.random.Generator, dims, activation: str) -> Network:
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        w = rng.normal(size=(fan_out, fan_in)) / np.sqrt(fan_in)
        act = "identity" if i == len(dims) - 2 else activation
        layers.append(Layer(w, act, 0.1 * rng.normal(size=fan_out)))
    return Network(layers)


def random_targets(rng: np.random.Generator, kind: str, n: int, width: int):
    if kind == "softmax_ce":
        return rng.integers(0, width, size=n)
    if kind == "sigmoid_nll":
        return rng.choice([-1.0, 1.0], size=(n, width))
    return rng.normal(size=(n, width))


def _timed(name, tolerance, fn) -> CheckResult:
    start = time.perf_counter()
    passed, measured, detail = fn()
    return CheckResult(name, bool(passed), float(measured), tolerance, time.perf_counter() - start, detail)


def check_variance_identity(instances: int = 1000, seed: int = 0, rtol: float = 1e-10) -> CheckResult:
    """Closed-form variance reduction equals the direct difference when g is proportional to the norms."""

    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(instances):
            B = int(rng.integers(2, 65))
            norms = rng.exponential(size=B) * rng.uniform(0.1, 10)
            g = norms / norms.sum()
            direct = variance_reduction_direct(norms, g)
            closed = variance_reduction_closed_form(norms, g)
            scale = max(abs(direct), np.mean(norms**2))
            worst = max(worst, abs(direct - closed) / scale)
        return worst <= rtol, worst, f"{instances} instances"

    return _timed("variance-reduction identity", rtol, run)


def check_unbiasedness(
    weights_fn=sampling.importance_weights,
    trials: int = 200,
    seed: int = 1,
    rtol: float = 1e-10,
    max_B: int = 12,
) -> CheckResult:
    """Exhaustive expectation of the weighted single draw equals the uniform mean."""

    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            B = int(rng.integers(1, max_B + 1))
            scores = rng.exponential(size=B) + 1e-3
            payload = rng.normal(size=(B, 3))
            g = sampling.normalize(scores)
            expectation = sum(
                g[i] * weights_fn(g, np.array([i]))[0] * payload[i] for i in range(B)
            )
            target = payload.mean(axis=0)
            err = np.max(np.abs(expectation - target)) / max(np.max(np.abs(target)), 1e-3)
            worst = max(worst, err)
        return worst <= rtol, worst, f"{trials} score vectors, B<={max_B}, b=1"

    return _timed("unbiasedness enumeration", rtol, run)


def check_bound_validity(networks: int = 20, batch: int = 16, seed: int = 2) -> CheckResult:
    """``L * rho * upper_bound >= per-sample gradient norm`` for every sample."""

    def run():
        rng = np.random.default_rng(seed)
        violations = 0
        worst_ratio = 0.0
        for _ in range(networks):
            depth = int(rng.integers(2, 5))
            dims = [int(d) for d in rng.integers(2, 33, size=depth + 1)]
            act = str(rng.choice(["relu", "tanh", "sigmoid"]))
            net = random_mlp(rng, dims, act)
            x = rng.normal(size=(batch, dims[0])) * rng.uniform(0.2, 3)
            trace = forward(net, x)
            rho = empirical_rho(net, trace).rho
            for kind in losses.LOSS_KINDS:
                y = random_targets(rng, kind, batch, dims[-1])
                bound = net.depth * rho * upper_bound_scores(trace, kind, y).scores
                true = gradient_norm_scores(net, trace, kind, y).scores
                violations += int(np.sum(true > bound * (1 + 1e-12)))
                ratio = true / np.maximum(bound, 1e-300)
                worst_ratio = max(worst_ratio, float(ratio.max()))
        return violations == 0, violations, f"max |G|/bound = {worst_ratio:.3f}"

    return _timed("gradient-norm bound (zero violations)", 0, run)


def check_gradients(networks: int = 10, seed: int = 3, rtol: float = 1e-4, atol: float = 1e-6) -> CheckResult:
    """Backprop against central differences of every parameter."""

    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for k in range(networks):
            kind = losses.LOSS_KINDS[k % 3]
            act = ["tanh", "sigmoid", "relu"][k % 3]
            dims = [int(d) for d in rng.integers(2, 7, size=int(rng.integers(3, 5)))]
            net = random_mlp(rng, dims, act)
            x = rng.normal(size=(5, dims[0]))
            y = random_targets(rng, kind, 5, dims[-1])
            trace = forward(net, x)
            analytic = backward(net, trace, losses.output_gradients(kind, trace.logits, y)).flat()
            params = net.parameters()
            theta = np.concatenate([p.ravel() for p in params])

            def loss_at(t):
                pos = 0
                for p in params:
                    p[...] = t[pos : pos + p.size].reshape(p.shape)
                    pos += p.size
                return losses.loss_values(kind, forward(net, x).logits, y).sum()

            numeric = central_differences(loss_at, theta)
            loss_at(theta)
            excess = np.abs(analytic - numeric) / np.maximum(rtol * np.abs(numeric), atol)
            worst = max(worst, float(excess.max()))
        return worst <= 1.0, worst, "max error / allowed error"

    return _timed("finite-difference gradients", 1.0, run)


def check_tau(
    tau_fn=instantaneous_tau,
    vectors: int = 20,
    draws: int = 100_000,
    seed: int = 4,
    sigmas: float = 3.0,
) -> CheckResult:
    """Exact hand values plus a Monte-Carlo check of the variance ratio against 1/tau."""

    def run():
        failures = []
        if tau_fn(np.full(4, 0.25)) != 1.0:
            failures.append("uniform")
        if any(tau_fn(np.eye(B)[B // 2]) != B for B in (2, 3, 7, 16, 64)):
            failures.append("one-hot")
        if tau_fn(np.array([0.75, 0.25])) != 1.25:
            failures.append("[0.75, 0.25]")
        rng = np.random.default_rng(seed)
        worst = -np.inf
        for _ in range(vectors):
            B = int(rng.integers(2, 65))
            G = rng.normal(size=(B, 4)) * rng.exponential(size=(B, 1)) + 0.3
            norms = np.linalg.norm(G, axis=1)
            g = norms / norms.sum()
            tau = tau_fn(g)
            if not tau >= 1.0 - 1e-12:
                failures.append(f"tau={tau:.4f} < 1")
            mean = G.mean(axis=0)
            var_u = np.mean(np.sum((G - mean) ** 2, axis=1))
            idx = sampling.draw(g, draws, rng)
            est = G[idx] / (B * g[idx])[:, None]
            dev = np.sum((est - mean) ** 2, axis=1)
            var_g = dev.mean()
            se = dev.std(ddof=1) / np.sqrt(draws)
            # Monte-Carlo variance agrees with the exact difference of variances
            exact_g = var_u - variance_reduction_direct(norms, g)
            if abs(var_g - exact_g) > sigmas * se:
                failures.append("monte-carlo variance")
            slack = (var_g - var_u / tau) / (sigmas * se)
            worst = max(worst, slack)
            if slack > 1.0:
                failures.append(f"ratio {var_g / var_u:.4f} > 1/tau {1 / tau:.4f}")
        detail = "; ".join(sorted(set(failures))) if failures else f"{vectors} vectors x {draws} draws"
        return not failures, worst, detail

    return _timed("tau semantics (worst excess in 3-sigma units)", 1.0, run)


def run_all() -> list[CheckResult]:
    return [
        check_gradients(),
        check_variance_identity(),
        check_bound_validity(),
        check_unbiasedness(),
        check_tau(),
    ]
