"""Per-sample losses on the final pre-activations and their closed-form gradients.

Three kinds are supported:

``softmax_ce``
    targets are class indices; loss is ``logsumexp(z) - z[y]``.
``sigmoid_nll``
    targets are +-1 per output unit; loss is ``sum log(1 + exp(-y z))``.
``squared_error``
    targets are real vectors; loss is ``|z - y|^2`` with no 1/2 factor.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit, logsumexp, softmax

LOSS_KINDS = ("softmax_ce", "sigmoid_nll", "squared_error")


def check_kind(kind: str) -> str:
    kind = kind.replace("-", "_")
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")
    return kind


def _prepare(kind: str, z: np.ndarray, targets):
    kind = check_kind(kind)
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z[None, :]
    n, width = z.shape
    if kind == "softmax_ce":
        y = np.asarray(targets).reshape(-1)
        if y.shape[0] != n:
            raise ValueError("one class index per sample is required")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("class targets must be integers")
            y = y.astype(np.int64)
        if np.any(y < 0) or np.any(y >= width):
            raise ValueError(f"class index out of range [0, {width})")
        return kind, z, y
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim == 1 and width == 1:
        y = y[:, None]
    elif y.ndim == 1 and n == 1:
        y = y[None, :]
    if y.shape != z.shape:
        raise ValueError(f"targets of shape {y.shape} do not match outputs {z.shape}")
    if kind == "sigmoid_nll" and not np.all(np.abs(y) == 1.0):
        raise ValueError("sigmoid targets must be -1 or +1")
    return kind, z, y


def loss_values(kind: str, z_L: np.ndarray, targets) -> np.ndarray:
    kind, z, y = _prepare(kind, z_L, targets)
    if kind == "softmax_ce":
        return logsumexp(z, axis=1) - z[np.arange(len(y)), y]
    if kind == "sigmoid_nll":
        return -log_expit(y * z).sum(axis=1)
    diff = z - y
    return np.einsum("ij,ij->i", diff, diff)


def preactivation_gradients(kind: str, z_L: np.ndarray, targets) -> np.ndarray:
    """Row i is the loss gradient with respect to sample i's final pre-activations."""
    kind, z, y = _prepare(kind, z_L, targets)
    if kind == "softmax_ce":
        grad = softmax(z, axis=1)
        grad[np.arange(len(y)), y] -= 1.0
        return grad
    if kind == "sigmoid_nll":
        return (expit(y * z) - 1.0) * y
    return 2.0 * (z - y)


# the last layer is linear, so d/dx^(L) and d/dz^(L) coincide
output_gradients = preactivation_gradients


def predictions(kind: str, z_L: np.ndarray) -> np.ndarray:
    """Hard predictions: argmax class (lowest index wins ties) or sign per unit."""
    kind = check_kind(kind)
    z = np.atleast_2d(np.asarray(z_L, dtype=np.float64))
    if kind == "softmax_ce":
        return np.argmax(z, axis=1)
    if kind == "sigmoid_nll":
        return np.where(z >= 0.0, 1.0, -1.0)
    return z
