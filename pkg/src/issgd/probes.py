"""Diagnostics on a fixed network: how well each score tracks the true
per-sample gradient norm, and how far resampled mini-batch gradients land from
the presample's mean gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sampling
from .datasets import Dataset
from .losses import output_gradients
from .nn import ForwardTrace, Network, backward, forward
from .scoring import compute_scores


def subset_trace(trace: ForwardTrace, rows) -> ForwardTrace:
    rows = np.asarray(rows)
    return ForwardTrace([z[rows] for z in trace.pre], [x[rows] for x in trace.post])


@dataclass
class ScoreTriples:
    loss: np.ndarray
    upper_bound: np.ndarray
    gradient_norm: np.ndarray

    def probabilities(self) -> dict[str, np.ndarray]:
        return {
            "loss": sampling.normalize(self.loss),
            "upper-bound": sampling.normalize(self.upper_bound),
            "gradient-norm": sampling.normalize(self.gradient_norm),
        }


def score_triples(network: Network, x: np.ndarray, y, loss_kind: str) -> ScoreTriples:
    trace = forward(network, x)
    return ScoreTriples(
        compute_scores("loss", network, trace, loss_kind, y).scores,
        compute_scores("upper-bound", network, trace, loss_kind, y).scores,
        compute_scores("gradient-norm", network, trace, loss_kind, y).scores,
    )


def sse(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.sum((np.asarray(p) - np.asarray(q)) ** 2))


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.corrcoef(a, b)[0, 1])


def correlation_summary(triples: ScoreTriples) -> dict:
    probs = triples.probabilities()
    ref = probs["gradient-norm"]
    return {
        "n": int(ref.size),
        "sse_loss": sse(probs["loss"], ref),
        "sse_upper_bound": sse(probs["upper-bound"], ref),
        "pearson_loss": pearson(triples.loss, triples.gradient_norm),
        "pearson_upper_bound": pearson(triples.upper_bound, triples.gradient_norm),
    }


def mean_gradient_distances(
    network: Network,
    x: np.ndarray,
    y,
    loss_kind: str,
    arms,
    b: int,
    repeats: int,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Mean over ``repeats`` of ``|G_b - G_B|`` for each arm.

    ``G_B`` is the mean gradient of the presample ``x``; ``G_b`` is the
    importance-weighted mean gradient of ``b`` points resampled with
    replacement according to the arm's scores (``uniform`` gives unit weights).
    """
    trace = forward(network, x)
    out = output_gradients(loss_kind, trace.logits, y)
    B = out.shape[0]
    full = backward(network, trace, out / B).flat()
    result = {}
    for arm in arms:
        g = sampling.normalize(compute_scores(arm, network, trace, loss_kind, y))
        dists = []
        for _ in range(repeats):
            idx = sampling.draw(g, b, rng)
            w = sampling.importance_weights(g, idx)
            sub_out = out[idx] * (w / b)[:, None]
            small = backward(network, subset_trace(trace, idx), sub_out).flat()
            dists.append(np.linalg.norm(small - full))
        result[arm] = float(np.mean(dists))
    return result


def variance_probe(
    network: Network,
    data: Dataset,
    loss_kind: str,
    arms=("uniform", "loss", "upper-bound", "gradient-norm"),
    B: int = 1024,
    b: int = 128,
    repeats: int = 10,
    rng: np.random.Generator | None = None,
    presample: np.ndarray | None = None,
) -> dict[str, float]:
    """Mean resampled-gradient distance per arm, divided by the uniform arm's."""
    rng = sampling.make_rng(0) if rng is None else rng
    if presample is None:
        presample = rng.choice(len(data), size=B, replace=False)
    arms = list(arms)
    if "uniform" not in arms:
        arms = ["uniform"] + arms
    raw = mean_gradient_distances(
        network, data.inputs[presample], data.targets[presample], loss_kind, arms, b, repeats, rng
    )
    return {arm: raw[arm] / raw["uniform"] for arm in arms}
