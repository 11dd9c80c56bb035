"""Feedforward networks with explicit forward traces and per-sample gradients.

Every layer is ``z = x @ W.T + b`` followed by an elementwise activation whose
slope is bounded by ``slope_bound``. The final layer is always linear; output
non-linearities belong to the loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")
FORMAT_VERSION = 1


class ShapeError(ValueError):
    pass


class DomainError(ValueError):
    pass


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if kind == "identity":
        return z.copy()
    raise ValueError(f"unknown activation {kind!r}")


def activation_slope(kind: str, z: np.ndarray) -> np.ndarray:
    """Elementwise derivative of the activation; relu'(0) is taken as 0."""
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - np.tanh(z) ** 2
    if kind == "sigmoid":
        s = 0.5 * (1.0 + np.tanh(0.5 * z))
        return s * (1.0 - s)
    if kind == "identity":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class Layer:
    weights: np.ndarray  # (fan_out, fan_in)
    activation: str = "identity"
    bias: np.ndarray | None = None  # (fan_out,) or None for a bias-free layer
    slope_bound: float = 1.0

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        if self.bias is not None:
            self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
            if self.bias.shape[0] != self.weights.shape[0]:
                raise ShapeError("bias length must equal the layer's output width")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not self.slope_bound > 0:
            raise ValueError("slope_bound must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise DomainError("non-finite weight")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @property
    def has_bias(self) -> bool:
        return self.bias is not None


@dataclass
class Network:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.fan_in != prev.fan_out:
                raise ShapeError(
                    f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}"
                )
        if self.layers[-1].activation != "identity":
            raise ValueError("the final layer must use the identity activation")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order (W1, b1, W2, b2, ...)."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            if layer.has_bias:
                out.append(layer.bias)
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> Network:
        return Network(
            [
                Layer(
                    layer.weights.copy(),
                    layer.activation,
                    None if layer.bias is None else layer.bias.copy(),
                    layer.slope_bound,
                )
                for layer in self.layers
            ]
        )


@dataclass
class ForwardTrace:
    """``pre[l]`` holds z^(l+1) and ``post[l]`` holds x^(l); ``post[0]`` is the input."""

    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def batch_size(self) -> int:
        return self.post[0].shape[0]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1]


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray | None] = field(default_factory=list)

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            if b is not None:
                out.append(b)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def norm(self) -> float:
        return float(np.sqrt(sum(np.sum(a * a) for a in self.arrays())))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def forward(network: Network, inputs: np.ndarray) -> ForwardTrace:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != network.layers[0].fan_in:
        raise ShapeError(
            f"expected inputs of width {network.layers[0].fan_in}, got shape {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite input")
    pre, post = [], [x]
    for layer in network.layers:
        z = x @ layer.weights.T
        if layer.has_bias:
            z = z + layer.bias
        x = activate(layer.activation, z)
        pre.append(z)
        post.append(x)
    return ForwardTrace(pre, post)


def _check_trace(network: Network, trace: ForwardTrace, output_grads: np.ndarray):
    if len(trace.pre) != network.depth or len(trace.post) != network.depth + 1:
        raise ShapeError("trace depth does not match the network")
    for layer, z in zip(network.layers, trace.pre):
        if z.shape[1] != layer.fan_out:
            raise ShapeError("trace widths do not match the network")
    if output_grads.shape != trace.pre[-1].shape:
        raise ShapeError(
            f"output grads have shape {output_grads.shape}, expected {trace.pre[-1].shape}"
        )


def preactivation_deltas(
    network: Network, trace: ForwardTrace, output_grads: np.ndarray
) -> list[np.ndarray]:
    """Per-sample dL/dz^(l) for every layer, each of shape (batch, M_l)."""
    delta = np.asarray(output_grads, dtype=np.float64)
    _check_trace(network, trace, delta)
    deltas = [None] * network.depth
    # final activation is identity, so dL/dz^(L) equals the output gradient
    deltas[-1] = delta
    for l in range(network.depth - 1, 0, -1):
        below = network.layers[l - 1]
        delta = (delta @ network.layers[l].weights) * activation_slope(
            below.activation, trace.pre[l - 1]
        )
        deltas[l - 1] = delta
    return deltas


def backward(
    network: Network, trace: ForwardTrace, output_grads: np.ndarray
) -> GradientSet:
    """Batch-summed parameter gradients.

    Per-sample weighting is done by the caller by scaling rows of
    ``output_grads`` before the call.
    """
    deltas = preactivation_deltas(network, trace, output_grads)
    weights, biases = [], []
    for layer, delta, x_in in zip(network.layers, deltas, trace.post[:-1]):
        weights.append(delta.T @ x_in)
        biases.append(delta.sum(axis=0) if layer.has_bias else None)
    return GradientSet(weights, biases)


def per_sample_gradient_norms(
    network: Network, trace: ForwardTrace, output_grads: np.ndarray
) -> np.ndarray:
    """L2 norm over all parameters of each sample's own gradient.

    A sample's weight gradient at layer l is the outer product of its
    pre-activation delta and its layer input, so its Frobenius norm is
    ``|delta| * |x|``; the bias gradient adds ``|delta|^2``.
    """
    deltas = preactivation_deltas(network, trace, output_grads)
    sq = np.zeros(trace.batch_size)
    for layer, delta, x_in in zip(network.layers, deltas, trace.post[:-1]):
        x_sq = np.einsum("ij,ij->i", x_in, x_in)
        if layer.has_bias:
            x_sq = x_sq + 1.0
        sq += np.einsum("ij,ij->i", delta, delta) * x_sq
    return np.sqrt(sq)


def glorot_init(
    layer_dims: Sequence[int],
    seed: int,
    activation: str = "relu",
    bias: bool = True,
) -> Network:
    """Uniform Glorot initialisation; hidden layers use ``activation``, the last is linear.

    Biases start at zero.
    """
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("need at least input and output dimensions")
    if any(d < 1 for d in dims):
        raise ValueError("layer dimensions must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        act = "identity" if i == len(dims) - 2 else activation
        layers.append(Layer(w, act, np.zeros(fan_out) if bias else None))
    return Network(layers)


def to_dict(network: Network) -> dict:
    """JSON-ready container; floats are stored as ``repr`` strings so round trips are exact."""
    return {
        "format": "issgd-network",
        "version": FORMAT_VERSION,
        "dims": network.dims,
        "layers": [
            {
                "activation": layer.activation,
                "slope_bound": repr(float(layer.slope_bound)),
                "shape": list(layer.weights.shape),
                "weights": [repr(float(v)) for v in layer.weights.ravel(order="C")],
                "bias": None
                if layer.bias is None
                else [repr(float(v)) for v in layer.bias],
            }
            for layer in network.layers
        ],
    }


def from_dict(data: dict) -> Network:
    if data.get("format") != "issgd-network":
        raise ValueError("not a serialized network")
    if data.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {data.get('version')}")
    layers = []
    for entry in data["layers"]:
        shape = tuple(entry["shape"])
        w = np.array([float(v) for v in entry["weights"]], dtype=np.float64)
        bias = entry.get("bias")
        layers.append(
            Layer(
                w.reshape(shape),
                entry["activation"],
                None if bias is None else np.array([float(v) for v in bias]),
                float(entry["slope_bound"]),
            )
        )
    net = Network(layers)
    if net.dims != list(data["dims"]):
        raise ShapeError("serialized dims disagree with the weight payloads")
    return net


def save_network(network: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(to_dict(network)))


def load_network(path: str | Path) -> Network:
    return from_dict(json.loads(Path(path).read_text()))
