import math
from dataclasses import replace

import numpy as np
import pytest

from issgd.datasets import Dataset, synth_blobs, uniform_batch
from issgd.losses import loss_values, output_gradients
from issgd.nn import GradientSet, Layer, Network, backward, forward, glorot_init, load_network
from issgd.sampling import importance_weights, make_rng, normalize
from issgd.scoring import upper_bound_scores
from issgd.trainer import (
    TrainConfig,
    TrainingAborted,
    batch_gradient,
    evaluate,
    run,
    sgd_step,
    train,
    zero_velocity,
)

from conftest import random_network


@pytest.fixture(scope="module")
def blobs():
    return synth_blobs(K=3, per_class=40, d=5, spread=1.0, seed=0)


def _net(data, seed=0):
    return glorot_init([data.dim, 8, data.num_classes], seed, "relu")


def _params(net):
    return [p.copy() for p in net.parameters()]


def _strip(records):
    return [{k: v for k, v in r.to_dict().items() if k != "wall_clock_seconds"} for r in records]


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"b": 0},
            {"b": 10, "B": 5},
            {"tau_th": 0.5},
            {"a_tau": 1.0},
            {"tau_mode": "cube"},
            {"learning_rate": 0.0},
            {"momentum": 1.0},
            {"weight_decay": -1.0},
            {"max_iterations": 0},
            {"score_kind": "random"},
            {"loss_kind": "hinge"},
        ],
    )
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_accepts_infinite_threshold(self):
        assert TrainConfig(tau_th=math.inf).tau_th == math.inf

    def test_schedule_multipliers_are_absolute(self):
        cfg = TrainConfig(learning_rate=0.1, lr_schedule=[(20, 0.04), (10, 0.2)])
        assert [cfg.lr_at(i) for i in (0, 9, 10, 19, 20, 500)] == [0.1, 0.1, 0.1 * 0.2, 0.1 * 0.2, 0.1 * 0.04, 0.1 * 0.04]


class TestSgdStep:
    def test_plain_sgd(self, small_net, rng):
        grads = GradientSet([rng.normal(size=w.shape) for w in (l.weights for l in small_net.layers)],
                            [rng.normal(size=l.bias.shape) for l in small_net.layers])
        before = _params(small_net)
        cfg = TrainConfig(learning_rate=0.3)
        sgd_step(small_net, grads, cfg, zero_velocity(small_net))
        for p, p0, g in zip(small_net.parameters(), before, grads.arrays()):
            np.testing.assert_array_equal(p, p0 - 0.3 * g)

    def test_zero_gradient_keeps_parameters(self, small_net):
        before = _params(small_net)
        zero = GradientSet([np.zeros_like(w) for w in (l.weights for l in small_net.layers)],
                           [np.zeros_like(l.bias) for l in small_net.layers])
        sgd_step(small_net, zero, TrainConfig(momentum=0.9), zero_velocity(small_net))
        for p, p0 in zip(small_net.parameters(), before):
            np.testing.assert_array_equal(p, p0)

    def test_two_momentum_steps_match_hand_unrolling(self):
        net = Network([Layer(np.array([[1.0, -2.0]]), bias=np.array([0.5]))])
        g1 = GradientSet([np.array([[0.3, 0.1]])], [np.array([-0.2])])
        g2 = GradientSet([np.array([[-0.4, 0.7]])], [np.array([0.05])])
        lr, mu, wd = 0.1, 0.9, 0.01
        cfg = TrainConfig(learning_rate=lr, momentum=mu, weight_decay=wd)
        vel = zero_velocity(net)
        sgd_step(net, g1, cfg, vel, 0)
        sgd_step(net, g2, cfg, vel, 1)
        # hand unrolling for W: v1 = g1 + wd W0, W1 = W0 - lr v1, v2 = mu v1 + g2 + wd W1, W2 = W1 - lr v2
        W0 = np.array([[1.0, -2.0]])
        v1 = g1.weights[0] + wd * W0
        W1 = W0 - lr * v1
        v2 = mu * v1 + g2.weights[0] + wd * W1
        W2 = W1 - lr * v2
        np.testing.assert_allclose(net.layers[0].weights, W2, rtol=0, atol=1e-15)
        b0 = np.array([0.5])
        u1 = g1.biases[0] + wd * b0
        b1 = b0 - lr * u1
        b2 = b1 - lr * (mu * u1 + g2.biases[0] + wd * b1)
        np.testing.assert_allclose(net.layers[0].bias, b2, rtol=0, atol=1e-15)

    def test_non_finite_gradient_aborts(self, small_net):
        bad = GradientSet([np.full_like(w, np.nan) for w in (l.weights for l in small_net.layers)],
                          [np.zeros_like(l.bias) for l in small_net.layers])
        with pytest.raises(TrainingAborted):
            sgd_step(small_net, bad, TrainConfig(), zero_velocity(small_net))


def _plain_sgd(config, network, data):
    """Minibatch momentum SGD written independently of the trainer."""
    rng = make_rng(config.seed)
    vel = [np.zeros_like(p) for p in network.parameters()]
    for it in range(config.max_iterations):
        idx = uniform_batch(len(data), config.b, rng)
        x, y = data.inputs[idx], data.targets[idx]
        trace = forward(network, x)
        out = output_gradients(config.loss_kind, trace.logits, y) / config.b
        grads = backward(network, trace, out)
        lr = config.lr_at(it)
        for p, g, v in zip(network.parameters(), grads.arrays(), vel):
            v *= config.momentum
            v += g
            p -= lr * v
    return network


class TestTrainLoop:
    def test_uniform_only_is_plain_sgd(self, blobs):
        cfg = TrainConfig(B=32, b=8, score_kind="uniform-only", learning_rate=0.1, momentum=0.9,
                          lr_schedule=[(30, 0.5)], max_iterations=60, seed=11)
        ours = _net(blobs)
        recs = run(cfg, ours, blobs)
        ref = _plain_sgd(cfg, _net(blobs), blobs)
        assert all(r.mode == "uniform" for r in recs)
        for p, q in zip(ours.parameters(), ref.parameters()):
            np.testing.assert_array_equal(p, q)

    @pytest.mark.parametrize("kind", ["upper-bound", "loss", "gradient-norm"])
    def test_infinite_threshold_never_switches(self, blobs, kind):
        cfg = TrainConfig(B=32, b=8, tau_th=math.inf, a_tau=0.0, score_kind=kind, max_iterations=80)
        recs = run(cfg, _net(blobs), blobs)
        assert {r.mode for r in recs} == {"uniform"}
        assert all(r.tau >= 1.0 for r in recs)

    def test_mode_follows_previous_tau(self, blobs):
        cfg = TrainConfig(B=32, b=8, tau_th=1.2, a_tau=0.5, learning_rate=0.2, max_iterations=150)
        recs = run(cfg, _net(blobs), blobs)
        prev = 0.0
        for r in recs:
            assert r.mode == ("importance" if prev > cfg.tau_th else "uniform")
            prev = r.tau
        assert {r.mode for r in recs} == {"uniform", "importance"}

    def test_threshold_one_switches_after_first_iteration(self, blobs):
        cfg = TrainConfig(B=32, b=8, tau_th=1.0, a_tau=0.0, max_iterations=20)
        recs = run(cfg, _net(blobs), blobs)
        assert recs[0].mode == "uniform"
        assert all(r.mode == "importance" for r in recs[1:])

    @pytest.mark.parametrize("kind,extra", [("upper-bound", 0), ("loss", 0), ("gradient-norm", 32)])
    def test_cost_accounting(self, blobs, kind, extra):
        cfg = TrainConfig(B=32, b=8, tau_th=1.0, a_tau=0.0, score_kind=kind, max_iterations=40)
        recs = run(cfg, _net(blobs), blobs)
        fwd = bwd = 0
        for r in recs:
            if r.mode == "importance":
                fwd, bwd = fwd + 32 + 8, bwd + 8 + extra
            else:
                fwd, bwd = fwd + 8, bwd + 8
            assert (r.forward_count, r.backward_count) == (fwd, bwd)
            assert r.cost_units == fwd + 2 * bwd

    def test_counters_and_iterations_monotone(self, blobs):
        recs = run(TrainConfig(B=32, b=8, tau_th=1.1, max_iterations=50), _net(blobs), blobs)
        assert [r.iteration for r in recs] == list(range(1, 51))
        for a, b in zip(recs, recs[1:]):
            assert b.forward_count >= a.forward_count and b.backward_count >= a.backward_count

    def test_deterministic(self, blobs):
        cfg = TrainConfig(B=32, b=8, tau_th=1.1, momentum=0.5, max_iterations=60, seed=3)
        a, b = _net(blobs), _net(blobs)
        assert _strip(run(cfg, a, blobs)) == _strip(run(cfg, b, blobs))
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_seed_changes_trajectory(self, blobs):
        cfg = TrainConfig(B=32, b=8, max_iterations=20)
        a = _strip(run(cfg, _net(blobs), blobs))
        b = _strip(run(replace(cfg, seed=1), _net(blobs), blobs))
        assert a != b

    def test_training_reduces_loss(self, blobs):
        net = _net(blobs)
        before, _ = evaluate(net, blobs, "softmax_ce")
        run(TrainConfig(B=64, b=16, learning_rate=0.1, momentum=0.9, max_iterations=200), net, blobs)
        assert evaluate(net, blobs, "softmax_ce")[0] < 0.5 * before

    def test_eval_cadence(self, blobs):
        recs = run(TrainConfig(B=32, b=8, max_iterations=25, eval_every=10), _net(blobs), blobs, blobs)
        assert [r.iteration for r in recs if r.eval_loss is not None] == [10, 20, 25]
        assert all(r.eval_error is not None for r in recs if r.eval_loss is not None)

    def test_checkpoints(self, blobs, tmp_path):
        net = _net(blobs)
        cfg = TrainConfig(B=32, b=8, max_iterations=20, checkpoint_every=10, checkpoint_dir=str(tmp_path))
        run(cfg, net, blobs)
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["checkpoint_00000010.json", "checkpoint_00000020.json"]
        restored = load_network(tmp_path / files[-1])
        for p, q in zip(restored.parameters(), net.parameters()):
            np.testing.assert_array_equal(p, q)

    def test_presample_larger_than_dataset(self, blobs):
        with pytest.raises(ValueError):
            next(train(TrainConfig(B=1000, b=8), _net(blobs), blobs))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverging_run_aborts(self, blobs):
        cfg = TrainConfig(B=32, b=8, learning_rate=1e6, score_kind="uniform-only", max_iterations=200)
        with pytest.raises(TrainingAborted):
            run(cfg, _net(blobs), blobs)

    def test_squared_error_regression(self, rng):
        x = rng.normal(size=(100, 3))
        data = Dataset(x, x @ np.array([[1.0], [-2.0], [0.5]]))
        net = Network([Layer(np.zeros((1, 3)))])
        cfg = TrainConfig(B=32, b=8, loss_kind="squared_error", score_kind="gradient-norm",
                          learning_rate=0.05, tau_th=1.0, max_iterations=300)
        run(cfg, net, data)
        np.testing.assert_allclose(net.layers[0].weights, [[1.0, -2.0, 0.5]], atol=1e-3)


class TestInSituUnbiasedness:
    @pytest.mark.parametrize("seed", range(5))
    def test_enumerated_single_draw(self, seed):
        rng = np.random.default_rng(seed)
        net = random_network(rng, [4, 6, 3])
        B = int(rng.integers(2, 13))
        x = rng.normal(size=(B, 4))
        y = rng.integers(0, 3, size=B)
        trace = forward(net, x)
        g = normalize(upper_bound_scores(trace, "softmax_ce", y))
        _, mean_grad = batch_gradient(net, trace, y, np.ones(B), "softmax_ce")
        expectation = [np.zeros_like(p) for p in mean_grad.arrays()]
        for i in range(B):
            w = importance_weights(g, [i], B)
            ti = forward(net, x[i : i + 1])
            _, gi = batch_gradient(net, ti, y[i : i + 1], w, "softmax_ce")
            for acc, part in zip(expectation, gi.arrays()):
                acc += g[i] * part
        for got, want in zip(expectation, mean_grad.arrays()):
            np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-14)

    def test_weighted_loss_is_weighted_mean(self, small_net, rng):
        x = rng.normal(size=(4, 5))
        y = rng.integers(0, 3, size=4)
        w = np.array([0.5, 1.0, 2.0, 4.0])
        trace = forward(small_net, x)
        loss, _ = batch_gradient(small_net, trace, y, w, "softmax_ce")
        assert loss == pytest.approx(np.mean(w * loss_values("softmax_ce", trace.logits, y)), rel=1e-15)


class TestEvaluate:
    def test_true_class_logit_plus_100(self):
        x = np.eye(3)
        net = Network([Layer(100 * np.eye(3))])
        loss, err = evaluate(net, Dataset(x, np.arange(3), 3), "softmax_ce")
        assert err == 0.0
        assert loss < 1e-40

    @pytest.mark.parametrize("k", [2, 4, 10])
    def test_uniform_logits_chance(self, k):
        data = Dataset(np.ones((5 * k, 2)), np.repeat(np.arange(k), 5), k)
        _, err = evaluate(Network([Layer(np.zeros((k, 2)))]), data, "softmax_ce")
        assert err == pytest.approx(1 - 1 / k, abs=1e-15)

    def test_hand_confusion(self):
        # class scores are the inputs themselves: predictions are 0, 1, 2, 0, 1
        x = np.array([[3.0, 1, 0], [0, 2, 1], [0, 0, 5], [2, 2, 0], [0, 4, 4]])
        y = np.array([0, 1, 1, 2, 2])
        _, err = evaluate(Network([Layer(np.eye(3))]), Dataset(x, y, 3), "softmax_ce")
        assert err == 3 / 5

    def test_chunking_does_not_change_result(self, blobs):
        net = _net(blobs)
        assert evaluate(net, blobs, "softmax_ce", chunk=7) == pytest.approx(evaluate(net, blobs, "softmax_ce"), rel=1e-13)

    def test_regression_has_no_error_rate(self, rng):
        x = rng.normal(size=(10, 2))
        loss, err = evaluate(Network([Layer(np.zeros((1, 2)))]), Dataset(x, np.ones((10, 1))), "squared_error")
        assert loss == 1.0 and err is None

    def test_sigmoid_error_counts_rows(self):
        x = np.array([[1.0], [-1.0], [1.0]])
        y = np.array([[1.0], [1.0], [-1.0]])
        _, err = evaluate(Network([Layer(np.array([[2.0]]))]), Dataset(x, y), "sigmoid_nll")
        assert err == 2 / 3
