"""Mini-batch training with learning-rate decay, early stopping and best-epoch restore."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import WindowBatch
from .errors import ConfigError, DivergenceError, InputError, NumericError
from .loss import LossConfig, weighted_cost
from .metrics import metrics_bundle
from .nn import CrdnnModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    initial_learning_rate: float = 1e-4
    lr_decay: float = 0.97  # multiplicative, per epoch
    max_epochs: int = 100
    early_stop_patience: int = 10
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.initial_learning_rate <= 0:
            raise ConfigError("initial_learning_rate must be positive")
        if self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ConfigError("max_epochs and early_stop_patience must be at least 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")

    def learning_rate(self, epoch: int) -> float:
        """Rate used during 1-based `epoch`."""
        return self.initial_learning_rate * self.lr_decay ** (epoch - 1)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, params: dict[str, np.ndarray]):
        self.params = params

    def step(self, grads, lr):
        for k, p in self.params.items():
            p -= lr * grads[k]


def make_optimizer(model: CrdnnModel, cfg: TrainConfig):
    params = model.param_dict()
    if cfg.optimizer == "sgd":
        return SGD(params)
    return Adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps)


@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    train_cost: float
    test_cost: float
    test_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stop_epoch: int = 0
    stop_reason: str = ""
    metrics: dict = field(default_factory=dict)

    @property
    def best_test_cost(self) -> float:
        return self.epochs[self.best_epoch - 1].test_cost

    def to_lines(self) -> list[str]:
        lines = [json.dumps({"record": "epoch", **asdict(e)}, sort_keys=True) for e in self.epochs]
        summary = {
            "record": "summary",
            "best_epoch": self.best_epoch,
            "stop_epoch": self.stop_epoch,
            "stop_reason": self.stop_reason,
            "metrics": self.metrics,
        }
        lines.append(json.dumps(summary, sort_keys=True))
        return lines

    def dumps(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrainReport":
        report = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("record")
            if kind == "epoch":
                report.epochs.append(EpochRecord(**rec))
            elif kind == "summary":
                report.best_epoch = rec["best_epoch"]
                report.stop_epoch = rec["stop_epoch"]
                report.stop_reason = rec["stop_reason"]
                report.metrics = rec["metrics"]
        return report

    def cost_curve_csv(self) -> str:
        rows = ["epoch,train_cost,test_cost,test_accuracy"]
        rows += [f"{e.epoch},{e.train_cost!r},{e.test_cost!r},{e.test_accuracy!r}" for e in self.epochs]
        return "\n".join(rows) + "\n"


def evaluate_cost(model: CrdnnModel, batch: WindowBatch, loss_cfg: LossConfig) -> tuple[float, np.ndarray]:
    """Cost on a whole batch in inference mode, plus the predicted probabilities."""
    probs = model.predict_proba(batch.windows)
    return weighted_cost(probs, batch.targets, model, loss_cfg), probs


def evaluate(model: CrdnnModel, batch: WindowBatch) -> dict:
    probs = model.predict_proba(batch.windows)
    return metrics_bundle(np.argmax(probs, axis=1), batch.labels)


def train(
    model: CrdnnModel,
    train_set: WindowBatch,
    test_set: WindowBatch,
    train_cfg: TrainConfig | None = None,
    loss_cfg: LossConfig | None = None,
) -> TrainReport:
    """Fit `model` in place; leaves it holding the parameters of the lowest test-cost epoch."""
    train_cfg = train_cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    if train_set is None or len(train_set) == 0:
        raise InputError("empty training set")
    if test_set is None or len(test_set) == 0:
        raise InputError("empty test set")
    rng = np.random.default_rng(train_cfg.seed)
    opt = make_optimizer(model, train_cfg)
    report = TrainReport()
    best_cost, best_state = math.inf, model.get_state()
    n = len(train_set)
    for epoch in range(1, train_cfg.max_epochs + 1):
        lr = train_cfg.learning_rate(epoch)
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, train_cfg.batch_size):
            idx = order[start : start + train_cfg.batch_size]
            try:
                cost, grads = model.loss_and_grads(
                    train_set.windows[idx], train_set.targets[idx], loss_cfg, training=True, rng=rng
                )
            except NumericError as exc:
                raise DivergenceError(epoch, lr, math.nan) from exc
            if not math.isfinite(cost):
                raise DivergenceError(epoch, lr, cost)
            opt.step(grads, lr)
            total += cost * len(idx)
        train_cost = total / n
        try:
            test_cost, probs = evaluate_cost(model, test_set, loss_cfg)
        except NumericError as exc:
            raise DivergenceError(epoch, lr, math.nan) from exc
        if not (math.isfinite(train_cost) and math.isfinite(test_cost)):
            raise DivergenceError(epoch, lr, test_cost)
        acc = float(np.mean(np.argmax(probs, axis=1) == test_set.labels))
        report.epochs.append(EpochRecord(epoch, lr, train_cost, test_cost, acc))
        log.debug("epoch %d lr %.3g train %.5f test %.5f acc %.4f", epoch, lr, train_cost, test_cost, acc)
        if test_cost < best_cost:
            best_cost, best_state = test_cost, model.get_state()
            report.best_epoch = epoch
        elif epoch - report.best_epoch >= train_cfg.early_stop_patience:
            report.stop_epoch, report.stop_reason = epoch, "early_stop"
            break
    else:
        report.stop_epoch, report.stop_reason = train_cfg.max_epochs, "max_epochs"
    model.set_state(best_state)
    report.metrics = evaluate(model, test_set)
    return report


def weight_magnitudes(model: CrdnnModel) -> dict[str, float]:
    """Mean absolute weight per parameter tensor; the conv entry is also split per input channel."""
    out = {name: float(np.mean(np.abs(p))) for name, p in model.named_params()}
    conv = model.param_dict()["conv.w"]
    for c in range(conv.shape[2]):
        out[f"conv.w[channel={c}]"] = float(np.mean(np.abs(conv[:, :, c])))
    return out
