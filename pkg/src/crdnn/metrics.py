"""Confusion matrices and imbalance-aware scores over (travel, loading, unloading)."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import CLASS_NAMES, LOADING, UNLOADING
from .errors import InputError, NumericError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are ground truth, columns are predictions."""

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def loading_unloading_confusions(self) -> int:
        return int(self.counts[LOADING, UNLOADING] + self.counts[UNLOADING, LOADING])

    def format(self) -> str:
        width = max(6, len(str(self.counts.max())) + 1)
        head = "truth\\pred" + "".join(f"{f'e{j}':>{width}}" for j in range(len(self.counts)))
        rows = [f"{f'e{i}':<10}" + "".join(f"{c:>{width}}" for c in row) for i, row in enumerate(self.counts)]
        return "\n".join([head, *rows])


def confusion(predictions, truths, n_classes: int = 3) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=int)
    truths = np.asarray(truths, dtype=int)
    if predictions.shape != truths.shape:
        raise InputError(f"{len(predictions)} predictions vs {len(truths)} truths")
    for arr in (predictions, truths):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise InputError(f"class indices must lie in [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (truths, predictions), 1)
    return ConfusionMatrix(counts)


def _require_total(cm: ConfusionMatrix):
    if cm.total == 0:
        raise NumericError("metric undefined for an empty confusion matrix")


def accuracy(cm: ConfusionMatrix) -> float:
    _require_total(cm)
    return float(np.trace(cm.counts) / cm.total)


def micro_f1(cm: ConfusionMatrix) -> float:
    """F1 from class-pooled TP/FP/FN."""
    _require_total(cm)
    tp = np.trace(cm.counts)
    fp = cm.counts.sum(axis=0).sum() - tp
    fn = cm.counts.sum(axis=1).sum() - tp
    return float(2 * tp / (2 * tp + fp + fn))


def macro_f1(cm: ConfusionMatrix) -> float:
    _require_total(cm)
    tp = np.diag(cm.counts).astype(float)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def per_class_errors(cm: ConfusionMatrix) -> dict[str, int]:
    return {name: int(cm.counts[i].sum() - cm.counts[i, i]) for i, name in enumerate(CLASS_NAMES)}


def metrics_bundle(predictions, truths) -> dict:
    cm = confusion(predictions, truths)
    return {
        "n": cm.total,
        "accuracy": accuracy(cm),
        "micro_f1": micro_f1(cm),
        "macro_f1": macro_f1(cm),
        "loading_unloading_confusions": cm.loading_unloading_confusions(),
        "per_class_errors": per_class_errors(cm),
        "confusion": cm.counts.tolist(),
    }


def dumps_bundle(bundle: dict) -> str:
    return json.dumps(bundle, indent=2, sort_keys=True)


@dataclass(frozen=True)
class Mistake:
    window: int
    truth: int
    prediction: int
    time: float | None = None


def error_map(predictions, truths, timestamps=None) -> list[Mistake]:
    """Every mismatch with its window index (and time, when given)."""
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    idx = np.flatnonzero(predictions != truths)
    return [
        Mistake(int(i), int(truths[i]), int(predictions[i]), None if timestamps is None else float(timestamps[i]))
        for i in idx
    ]


def near_transition_share(mistakes: list[Mistake], frame_labels: np.ndarray, frames: np.ndarray, radius: int) -> float:
    """Share of mistakes whose labeled frame lies within `radius` frames of a label change.

    `frames[k]` is the raw frame index of mistake k inside the series labeled by `frame_labels`.
    """
    if not mistakes:
        return 1.0
    changes = np.flatnonzero(np.diff(frame_labels)) + 1
    if len(changes) == 0:
        return 0.0
    frames = np.asarray(frames)
    dist = np.min(np.abs(frames[:, None] - changes[None, :]), axis=1)
    return float(np.mean(dist <= radius))
