import numpy as np
import pytest

from issgd.nn import Layer, Network, glorot_init


def random_network(rng, dims, activation="tanh", bias=True, scale=1.0):
    """Random MLP with mixed-scale weights and non-zero biases."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        w = scale * rng.normal(size=(fan_out, fan_in)) / np.sqrt(fan_in)
        act = "identity" if i == len(dims) - 2 else activation
        bvec = 0.1 * rng.normal(size=fan_out) if bias else None
        layers.append(Layer(w, act, bvec))
    return Network(layers)


def random_targets(rng, kind, n, width):
    if kind == "softmax_ce":
        return rng.integers(0, width, size=n)
    if kind == "sigmoid_nll":
        return rng.choice([-1.0, 1.0], size=(n, width))
    return rng.normal(size=(n, width))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_net():
    return glorot_init([5, 7, 3], seed=3, activation="tanh")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
