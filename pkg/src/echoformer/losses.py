"""Training objectives.

EF: per video ((p-y)^2 + |p-y|) scaled by a target-dependent weight
R(y) = (1-alpha) + alpha*|y-gamma|/gamma, then averaged over the batch. The
weight is smallest (1-alpha) at the over-represented EF value gamma, so
under-represented targets count more.

SD: masked MSE for the regression head; weighted cross-entropy for the
classification head, normalized by the total applied weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError
from .numerics import (
    Tensor,
    absolute,
    as_tensor,
    log,
    permute,
    reduce_sum,
    take_per_row,
)

_PROB_FLOOR = 1e-12


@dataclass
class LossConfig:
    alpha: float = 0.7
    gamma: float = 0.65
    ce_weights: tuple[float, float, float] = (1.0, 5.0, 5.0)   # transition, ED, ES
    sd_mode: str = "regression"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha {self.alpha} outside [0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError(f"gamma {self.gamma} outside (0, 1)")
        if any(w <= 0 for w in self.ce_weights):
            raise ConfigurationError("cross-entropy weights must be positive")
        if self.sd_mode not in ("regression", "classification"):
            raise ConfigurationError(f"unknown sd_mode {self.sd_mode!r}")


def regularizer(target: float, alpha: float = 0.7, gamma: float = 0.65) -> float:
    """(1-alpha) + alpha*|target-gamma|/gamma; minimum 1-alpha at target==gamma."""
    return (1.0 - alpha) + alpha * abs(target - gamma) / gamma


def ef_loss(pred, target, config: LossConfig = LossConfig()) -> Tensor:
    """Batch-mean of ((p-y)^2 + |p-y|) * R(y); pred and target on the 0-1 scale."""
    pred = as_tensor(pred)
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    weights = np.array([regularizer(y, config.alpha, config.gamma) for y in target])
    diff = pred - target
    per_video = (diff * diff + absolute(diff)) * weights
    return reduce_sum(per_video) / float(target.size)


def sd_regression_loss(signal, labels, mask) -> Tensor:
    """Mean squared error over live frames only."""
    signal = as_tensor(signal)
    labels = np.asarray(labels, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if signal.shape[0] != labels.shape[0] or labels.shape[0] != mask.shape[0]:
        raise ConfigurationError(
            f"sd_regression_loss: lengths differ "
            f"({signal.shape[0]}, {labels.shape[0]}, {mask.shape[0]})"
        )
    live = int(mask.sum())
    if live == 0:
        raise DegenerateInputError("sd_regression_loss: no live frames")
    diff = signal - labels
    return reduce_sum(diff * diff * mask.astype(signal.dtype)) / float(live)


def sd_classification_loss(probs, labels, weights=(1.0, 5.0, 5.0), mask=None) -> Tensor:
    """Weighted negative log-likelihood over live frames.

    probs: (3, num_frames) columns are distributions; labels: int classes,
    padded frames may carry -1 and are skipped. The loss is normalized by the
    sum of the weights actually applied. Probabilities are floored at 1e-12.
    """
    probs = as_tensor(probs)
    labels = np.asarray(labels)
    n = probs.shape[1]
    if labels.shape[0] != n:
        raise ConfigurationError(
            f"sd_classification_loss: {n} frames but {labels.shape[0]} labels"
        )
    mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    live = mask & (labels >= 0)
    if not live.any():
        raise DegenerateInputError("sd_classification_loss: no live labeled frames")
    weights = np.asarray(weights, dtype=np.float64)
    safe_labels = np.where(live, labels, 0)
    picked = take_per_row(permute(probs, (1, 0)), safe_labels)   # p[label_f, f]
    applied = np.where(live, weights[safe_labels], 0.0)
    nll = -reduce_sum(log(picked, floor=_PROB_FLOOR) * applied)
    return nll / float(applied.sum())


def total_loss(ef_term: Tensor, sd_term: Tensor) -> Tensor:
    """Both branches train simultaneously with unit weighting."""
    return ef_term + sd_term
