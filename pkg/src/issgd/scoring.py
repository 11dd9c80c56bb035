"""Per-sample importance scores and the empirical constant of the gradient-norm bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import loss_values, preactivation_gradients
from .nn import ForwardTrace, Network, activation_slope, per_sample_gradient_norms

SCORE_KINDS = ("upper-bound", "loss", "gradient-norm", "uniform")


@dataclass
class ScoreVector:
    scores: np.ndarray
    kind: str

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.scores.size < 1:
            raise ValueError("empty score vector")
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise ValueError("scores must be finite and non-negative")

    def __len__(self):
        return self.scores.size


@dataclass
class RhoEstimate:
    rho: float
    per_layer_terms: np.ndarray  # max over samples of |x^(l-1)| |Delta^(l)|, one per layer


def upper_bound_scores(trace: ForwardTrace, kind: str, targets) -> ScoreVector:
    """Norm of the loss gradient w.r.t. the last pre-activations (constant factor dropped)."""
    grads = preactivation_gradients(kind, trace.logits, targets)
    return ScoreVector(np.sqrt(np.einsum("ij,ij->i", grads, grads)), "upper-bound")


def loss_scores(trace: ForwardTrace, kind: str, targets) -> ScoreVector:
    # a tiny negative from log-sum-exp cancellation would break the score invariant
    return ScoreVector(np.maximum(loss_values(kind, trace.logits, targets), 0.0), "loss")


def gradient_norm_scores(
    network: Network, trace: ForwardTrace, kind: str, targets
) -> ScoreVector:
    grads = preactivation_gradients(kind, trace.logits, targets)
    return ScoreVector(per_sample_gradient_norms(network, trace, grads), "gradient-norm")


def uniform_scores(trace: ForwardTrace) -> ScoreVector:
    return ScoreVector(np.ones(trace.batch_size), "uniform")


def compute_scores(
    score_kind: str, network: Network, trace: ForwardTrace, loss_kind: str, targets
) -> ScoreVector:
    if score_kind == "upper-bound":
        return upper_bound_scores(trace, loss_kind, targets)
    if score_kind == "loss":
        return loss_scores(trace, loss_kind, targets)
    if score_kind == "gradient-norm":
        return gradient_norm_scores(network, trace, loss_kind, targets)
    if score_kind == "uniform":
        return uniform_scores(trace)
    raise ValueError(f"unknown score kind {score_kind!r}")


def _matrix_norms(mats: np.ndarray, norm: str) -> np.ndarray:
    if norm == "spectral":
        return np.linalg.norm(mats, ord=2, axis=(1, 2))
    if norm == "frobenius":
        return np.sqrt(np.einsum("ijk,ijk->i", mats, mats))
    raise ValueError(f"unknown matrix norm {norm!r}")


def empirical_rho(
    network: Network, trace: ForwardTrace, norm: str = "spectral"
) -> RhoEstimate:
    """Largest per-layer propagation factor ``|x^(l-1)| |Delta^(l)|`` over the batch.

    ``Delta^(l)`` maps the last pre-activation gradient back to layer l's
    pre-activations; for the last layer it is the identity (norm 1). Layers
    with a bias see the augmented input ``[x, 1]``.
    """
    n = trace.batch_size
    depth = network.depth
    out_width = network.layers[-1].fan_out
    # delta[i] = Delta_i^(l), stacked over samples: (n, M_l, M_L)
    delta = np.broadcast_to(np.eye(out_width), (n, out_width, out_width))
    terms = np.zeros(depth)
    for l in range(depth - 1, -1, -1):
        layer = network.layers[l]
        if l == depth - 1:
            op_norms = np.ones(n)
        else:
            op_norms = _matrix_norms(delta, norm)
        x_in = trace.post[l]
        x_norms = np.einsum("ij,ij->i", x_in, x_in)
        if layer.has_bias:
            x_norms = x_norms + 1.0
        terms[l] = np.max(np.sqrt(x_norms) * op_norms)
        if l > 0:
            slopes = activation_slope(network.layers[l - 1].activation, trace.pre[l - 1])
            # Delta^(l-1) = diag(sigma'(z^(l-1))) W_l^T Delta^(l)
            delta = slopes[:, :, None] * np.einsum("ji,njk->nik", layer.weights, delta)
    return RhoEstimate(float(terms.max()), terms)
