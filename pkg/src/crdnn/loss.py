"""Class-weighted two-sided cross-entropy with an L2 penalty."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

PROB_FLOOR = 1e-12


def default_class_weights() -> np.ndarray:
    """Weights for (travel, loading, unloading): rarer working states cost more."""
    return np.array([1.0, 4.0, 7.0])


@dataclass
class LossConfig:
    class_weights: np.ndarray = field(default_factory=default_class_weights)
    l2_lambda: float = 1e-3
    # "head": the last two dense weight matrices; "all_dense": every dense weight matrix
    regularized_layers: str = "head"

    def __post_init__(self):
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
        if self.class_weights.ndim != 1 or np.any(self.class_weights <= 0):
            raise ConfigError("class weights must be a strictly positive vector")
        if self.l2_lambda < 0:
            raise ConfigError("l2_lambda must be non-negative")
        if self.regularized_layers not in ("head", "all_dense"):
            raise ConfigError(f"unknown regularized_layers {self.regularized_layers!r}")


def _check_finite(predictions: np.ndarray) -> None:
    bad = ~np.all(np.isfinite(predictions), axis=1)
    if np.any(bad):
        raise NumericError(f"non-finite prediction at sample {int(np.argmax(bad))}")


def data_cost(predictions: np.ndarray, targets: np.ndarray, class_weights: np.ndarray) -> float:
    """Unregularized part of the cost, averaged over samples."""
    predictions = np.atleast_2d(predictions)
    targets = np.atleast_2d(targets)
    _check_finite(predictions)
    h = np.clip(predictions, PROB_FLOOR, 1.0 - PROB_FLOOR)
    per_class = -targets * np.log(h) - (1.0 - targets) * np.log(1.0 - h)
    return float(np.sum(per_class @ class_weights) / predictions.shape[0])


def data_cost_grad(predictions: np.ndarray, targets: np.ndarray, class_weights: np.ndarray) -> np.ndarray:
    """Gradient of `data_cost` w.r.t. the predicted probabilities (zero where clamped)."""
    m = predictions.shape[0]
    h = np.clip(predictions, PROB_FLOOR, 1.0 - PROB_FLOOR)
    grad = (-targets / h + (1.0 - targets) / (1.0 - h)) * class_weights / m
    clamped = (predictions < PROB_FLOOR) | (predictions > 1.0 - PROB_FLOOR)
    grad[clamped] = 0.0
    return grad


def l2_penalty(weights: list[np.ndarray], l2_lambda: float, m: int) -> float:
    if l2_lambda == 0 or not weights:
        return 0.0
    return l2_lambda / (2.0 * m) * float(sum(np.sum(w * w) for w in weights))


def weighted_cost(predictions, targets, model=None, config: LossConfig | None = None) -> float:
    """Full cost: weighted data term plus L2 over the model's selected weight matrices.

    `model` may be None, in which case only the data term is returned.
    """
    config = config or LossConfig()
    predictions = np.atleast_2d(np.asarray(predictions, dtype=np.float64))
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    cost = data_cost(predictions, targets, config.class_weights)
    if model is not None:
        weights = model.regularized_weights(config.regularized_layers)
        cost += l2_penalty(weights, config.l2_lambda, predictions.shape[0])
    return cost
