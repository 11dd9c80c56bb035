"""Turning scores into a sampling distribution, and drawing from it with unbiasing weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scoring import ScoreVector

PROB_FLOOR = 1e-8
ZERO_MASS = 1e-12
RNG_NAME = "philox"


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox4x64 stream; identical draws on every platform."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class SamplingPlan:
    probabilities: np.ndarray
    selected_indices: np.ndarray
    weights: np.ndarray


def _check_distribution(g: np.ndarray) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.size == 0 or not np.all(np.isfinite(g)) or np.any(g < 0):
        raise ValueError("probabilities must be finite and non-negative")
    if abs(g.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {g.sum()!r}, not 1")
    return g


def normalize(scores, floor: float = PROB_FLOOR) -> np.ndarray:
    """Probabilities proportional to ``scores``, mixed with uniform just enough
    that every entry is at least ``floor``. All-zero scores give uniform."""
    s = scores.scores if isinstance(scores, ScoreVector) else np.asarray(scores, float)
    s = s.reshape(-1)
    if s.size == 0:
        raise ValueError("empty score vector")
    if not np.all(np.isfinite(s)) or np.any(s < 0):
        raise ValueError("scores must be finite and non-negative")
    n = s.size
    total = s.sum()
    if total < ZERO_MASS:
        return np.full(n, 1.0 / n)
    g = s / total
    g_min = g.min()
    if g_min < floor:
        lam = (floor - g_min) / (1.0 / n - g_min)
        g = (1.0 - lam) * g + lam / n
    return g


def draw(g, b: int, rng: np.random.Generator) -> np.ndarray:
    """``b`` i.i.d. indices distributed as ``g`` (with replacement)."""
    g = _check_distribution(g)
    if b < 1:
        raise ValueError("b must be positive")
    cdf = np.cumsum(g)
    idx = np.searchsorted(cdf, rng.random(b) * cdf[-1], side="right")
    return np.minimum(idx, g.size - 1)


def importance_weights(g, indices, B: int | None = None) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    B = g.size if B is None else B
    if B != g.size:
        raise ValueError("B must equal the length of the distribution")
    picked = g[np.asarray(indices)]
    assert np.all(picked > 0), "selected an index with zero probability"
    return 1.0 / (B * picked)


def resample(scores, b: int, rng: np.random.Generator) -> SamplingPlan:
    g = normalize(scores)
    idx = draw(g, b, rng)
    return SamplingPlan(g, idx, importance_weights(g, idx))
