"""Variance-reduction measures and the equivalent batch-size increment tau."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

TAU_MODES = ("standard", "sqrt")
MIN_INV_TAU = 1e-6  # caps tau at 1e6


def instantaneous_tau(g, mode: str = "standard") -> float:
    """Batch-size increment giving the same variance reduction as sampling with ``g``.

    ``1/tau = 1 - |g - u|^2 / sum(g^2)``; ``sqrt`` mode returns ``sqrt(tau)``.
    Evaluated as ``(2 sum(g) - 1) / (B sum(g^2))``, the same quantity without
    the cancellation in ``sum(g^2) - |g - u|^2``.
    """
    if mode not in TAU_MODES:
        raise ValueError(f"unknown tau mode {mode!r}")
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.size < 1:
        raise ValueError("empty distribution")
    numer = g.size * np.sum(g * g)
    denom = 2.0 * g.sum() - 1.0
    tau = numer / denom if denom >= MIN_INV_TAU * numer else 1.0 / MIN_INV_TAU
    return float(np.sqrt(tau)) if mode == "sqrt" else float(tau)


@dataclass
class TauEstimator:
    tau: float = 0.0
    a_tau: float = 0.9
    tau_th: float = 1.5
    mode: str = "standard"

    def __post_init__(self):
        if not 0.0 <= self.a_tau <= 1.0:
            raise ValueError("a_tau must lie in [0, 1]")
        if self.mode not in TAU_MODES:
            raise ValueError(f"unknown tau mode {self.mode!r}")


def ema_update(est: TauEstimator, g) -> TauEstimator:
    value = instantaneous_tau(g, est.mode)
    return replace(est, tau=est.a_tau * est.tau + (1.0 - est.a_tau) * value)


def should_switch(est: TauEstimator) -> bool:
    return est.tau > est.tau_th


def variance_reduction_direct(norms, g) -> float:
    """``E_u |G|^2 - E_g[w^2 |G|^2]`` with ``w = 1/(B g)``."""
    norms, g = _pair(norms, g)
    B = norms.size
    w = 1.0 / (B * g)
    return float(np.mean(norms**2) - np.sum(g * w**2 * norms**2))


def variance_reduction_closed_form(norms, g) -> float:
    """``(mean |G|)^2 B |g - u|^2``; equals the direct form when ``g`` is proportional to ``norms``."""
    norms, g = _pair(norms, g)
    B = norms.size
    return float(np.mean(norms) ** 2 * B * np.sum((g - 1.0 / B) ** 2))


def variance_reduction(norms, g, rtol: float = 1e-12) -> float:
    norms, g = _pair(norms, g)
    total = norms.sum()
    if total > 0 and np.allclose(g, norms / total, rtol=rtol, atol=0.0):
        return variance_reduction_closed_form(norms, g)
    return variance_reduction_direct(norms, g)


def _pair(norms, g):
    norms = np.asarray(norms, dtype=np.float64).reshape(-1)
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if norms.shape != g.shape:
        raise ValueError("norms and probabilities must have equal length")
    if np.any(norms < 0):
        raise ValueError("norms must be non-negative")
    return norms, g


def max_variance_reduction(B: int, b: int) -> float:
    if not 1 <= b <= B:
        raise ValueError("need 1 <= b <= B")
    return 1.0 / b - 1.0 / B


def guaranteed_speedup_threshold(B: int, b: int) -> float:
    """Smallest tau that pays for scoring ``B`` samples (forward=1, backward=2 units)."""
    if B < 1 or b < 1:
        raise ValueError("B and b must be positive")
    return (B + 3 * b) / (3 * b)


def speedup_holds(tau: float, B: int, b: int) -> bool:
    return B + 3 * b < 3 * tau * b
