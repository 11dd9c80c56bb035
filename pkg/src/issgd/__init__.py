"""Importance-sampling SGD for small feedforward networks.

Samples are scored by the norm of the loss gradient with respect to the
network's last pre-activations, a cheap upper bound (up to a constant) on the
full per-sample gradient norm. Training starts uniform and switches to
presample-and-resample importance sampling once the estimated equivalent
batch-size increment ``tau`` crosses a threshold.
"""

from .nn import Layer, Network, backward, forward, glorot_init, per_sample_gradient_norms
from .sampling import draw, importance_weights, normalize
from .scoring import empirical_rho, gradient_norm_scores, loss_scores, upper_bound_scores
from .trainer import MetricsRecord, TrainConfig, evaluate, sgd_step, train
from .variance import (
    TauEstimator,
    ema_update,
    guaranteed_speedup_threshold,
    instantaneous_tau,
    max_variance_reduction,
    should_switch,
    speedup_holds,
    variance_reduction,
)

__version__ = "0.1.0"
