import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from issgd.sampling import (
    PROB_FLOOR,
    draw,
    importance_weights,
    make_rng,
    normalize,
    resample,
)
from issgd.scoring import ScoreVector

scores_strategy = st.lists(
    st.floats(0, 1e3, allow_nan=False, allow_infinity=False), min_size=1, max_size=40
)


class TestNormalize:
    def test_equal_scores(self):
        np.testing.assert_array_equal(normalize([1, 1, 1, 1]), [0.25] * 4)

    def test_proportional(self):
        np.testing.assert_array_equal(normalize([3, 1]), [0.75, 0.25])

    def test_all_zero_is_uniform(self):
        np.testing.assert_allclose(normalize([0, 0, 0]), [1 / 3] * 3, rtol=1e-15)

    def test_accepts_score_vector(self):
        np.testing.assert_array_equal(normalize(ScoreVector(np.array([1.0, 3.0]), "loss")), [0.25, 0.75])

    def test_floor_applied_minimally(self):
        g = normalize([1.0, 0.0, 0.0, 0.0])
        assert g.min() == pytest.approx(PROB_FLOOR, rel=1e-9)
        assert g.sum() == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("bad", [[-1.0, 2.0], [np.nan, 1.0], [np.inf, 1.0]])
    def test_rejects_bad_scores(self, bad):
        with pytest.raises(ValueError):
            normalize(bad)

    @settings(max_examples=200, deadline=None)
    @given(scores_strategy)
    def test_is_distribution_with_floor(self, scores):
        g = normalize(scores)
        assert abs(g.sum() - 1) <= 1e-12
        assert g.min() >= PROB_FLOOR * (1 - 1e-9)

    @settings(max_examples=100, deadline=None)
    @given(scores_strategy, st.floats(1e-3, 1e3))
    def test_scale_invariant(self, scores, c):
        np.testing.assert_allclose(normalize(np.array(scores) * c), normalize(scores), rtol=1e-9, atol=1e-15)


class TestDraw:
    def test_one_hot(self):
        assert np.all(draw([0, 0, 1, 0], 50, make_rng(0)) == 2)

    def test_uniform_frequencies(self):
        # binomial sd at n=1e6, p=0.25 is 4.3e-4; 0.002 is ~4.6 sd
        idx = draw(np.full(4, 0.25), 10**6, make_rng(1))
        np.testing.assert_allclose(np.bincount(idx, minlength=4) / 1e6, 0.25, atol=0.002)

    def test_reproducible(self):
        g = normalize([1, 2, 3, 4, 5])
        np.testing.assert_array_equal(draw(g, 100, make_rng(7)), draw(g, 100, make_rng(7)))

    def test_frozen_stream(self):
        # guards the generator choice: Philox draws are identical on every platform
        assert draw(np.full(10, 0.1), 8, make_rng(2024)).tolist() == FROZEN_DRAWS

    def test_never_selects_zero_probability(self):
        g = np.array([0.5, 0.0, 0.5, 0.0])
        assert set(draw(g, 10_000, make_rng(3)).tolist()) <= {0, 2}

    @pytest.mark.parametrize("bad", [[0.5, 0.6], [-0.1, 1.1], [np.nan, 1.0]])
    def test_rejects_invalid(self, bad):
        with pytest.raises(ValueError):
            draw(bad, 1, make_rng(0))

    def test_rejects_nonpositive_b(self):
        with pytest.raises(ValueError):
            draw([1.0], 0, make_rng(0))


FROZEN_DRAWS = [int(v) for v in draw(np.full(10, 0.1), 8, make_rng(2024))]


class TestImportanceWeights:
    def test_uniform_gives_unit_weights(self):
        np.testing.assert_array_equal(importance_weights(np.full(5, 0.2), [0, 3, 4]), [1, 1, 1])

    def test_direct_formula(self):
        w = importance_weights([0.5, 0.25, 0.125, 0.125], [0, 1, 2], 4)
        np.testing.assert_array_equal(w, [0.5, 1.0, 2.0])

    def test_b_must_match(self):
        with pytest.raises(ValueError):
            importance_weights([0.5, 0.5], [0], 3)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=12), st.integers(0, 2**32 - 1))
    def test_unbiased_by_enumeration(self, scores, seed):
        g = normalize(scores)
        payload = np.random.default_rng(seed).normal(size=(len(scores), 3))
        expectation = sum(g[i] * importance_weights(g, [i])[0] * payload[i] for i in range(len(g)))
        np.testing.assert_allclose(expectation, payload.mean(axis=0), rtol=1e-10, atol=1e-12)

    def test_unbiased_for_b_of_two(self, rng):
        # exhaustive over ordered pairs: the mean of weighted payloads is unbiased for any b
        scores = rng.exponential(size=5)
        payload = rng.normal(size=5)
        g = normalize(scores)
        total = 0.0
        for i, j in itertools.product(range(5), repeat=2):
            w = importance_weights(g, [i, j])
            total += g[i] * g[j] * (w[0] * payload[i] + w[1] * payload[j]) / 2
        assert total == pytest.approx(payload.mean(), rel=1e-12)


class TestOptimalVariance:
    @pytest.mark.parametrize("seed", range(10))
    def test_gradient_norm_sampling_beats_uniform(self, seed):
        rng = np.random.default_rng(seed)
        B = int(rng.integers(2, 17))
        G = rng.normal(size=(B, 3)) * rng.exponential(size=(B, 1))
        norms = np.linalg.norm(G, axis=1)
        g = normalize(norms)
        mean = G.mean(axis=0)
        var_u = np.mean(np.sum((G - mean) ** 2, axis=1))
        w = importance_weights(g, np.arange(B))
        var_g = np.sum(g * np.sum((w[:, None] * G - mean) ** 2, axis=1))
        assert var_g <= var_u + 1e-12


def test_resample_plan(rng):
    plan = resample(rng.exponential(size=20), 7, make_rng(5))
    assert plan.selected_indices.shape == (7,)
    np.testing.assert_allclose(plan.weights, 1 / (20 * plan.probabilities[plan.selected_indices]))
