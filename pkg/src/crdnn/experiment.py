"""Architecture x window-size comparison grid."""

from __future__ import annotations

import logging
import time
import traceback
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import WINDOW_SIZES, LabeledSeries, PipelineConfig, prepare, split_dataset
from .errors import ConfigError
from .loss import LossConfig
from .nn import ARCHITECTURES, CrdnnModel, ModelConfig, build_model, count_parameters
from .training import TrainConfig, TrainReport, train

log = logging.getLogger(__name__)


@dataclass
class GridConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    model_seed: int = 0


def desk_grid_config(seed: int = 0) -> GridConfig:
    """Settings that fit the full 3x3 grid on one CPU core in minutes.

    Raises the Adam rate above the 1e-4 default and caps epochs; everything
    else keeps the library defaults.
    """
    return GridConfig(
        train=TrainConfig(initial_learning_rate=3e-3, max_epochs=12, early_stop_patience=4, seed=seed),
        pipeline=PipelineConfig(split_seed=seed),
        model_seed=seed,
    )


@dataclass
class CellResult:
    arch: str
    window_size: int
    n_params: int = 0
    report: TrainReport | None = None
    model: CrdnnModel | None = None
    seconds: float = 0.0
    error: str | None = None

    @property
    def metrics(self) -> dict:
        return self.report.metrics if self.report else {}


@dataclass
class GridResult:
    cells: list[CellResult]

    def cell(self, arch: str, window_size: int) -> CellResult:
        for c in self.cells:
            if c.arch == arch and c.window_size == window_size:
                return c
        raise KeyError((arch, window_size))

    def best(self) -> CellResult:
        ok = [c for c in self.cells if c.error is None]
        return max(ok, key=lambda c: (c.metrics["micro_f1"], -c.n_params))

    def table(self) -> str:
        head = f"{'arch':<8}{'ws':>4}{'params':>8}{'stop':>6}{'best':>6}{'acc':>9}{'microF1':>9}{'macroF1':>9}{'L<->U':>7}"
        rows = [head]
        for c in self.cells:
            if c.error:
                rows.append(f"{c.arch:<8}{c.window_size:>4}  FAILED: {c.error.splitlines()[-1]}")
                continue
            m = c.metrics
            rows.append(
                f"{c.arch:<8}{c.window_size:>4}{c.n_params:>8}{c.report.stop_epoch:>6}{c.report.best_epoch:>6}"
                f"{m['accuracy']:>9.4f}{m['micro_f1']:>9.4f}{m['macro_f1']:>9.4f}{m['loading_unloading_confusions']:>7}"
            )
        return "\n".join(rows)


def run_cell(arch, window_size, train_set, test_set, cfg: GridConfig) -> CellResult:
    result = CellResult(arch, window_size)
    t0 = time.perf_counter()
    try:
        model = build_model(replace(cfg.model, arch=arch), seed=cfg.model_seed)
        result.n_params = count_parameters(model)
        result.report = train(model, train_set, test_set, cfg.train, cfg.loss)
        result.model = model
    except Exception:
        result.error = traceback.format_exc()
        log.error("cell %s ws=%d failed:\n%s", arch, window_size, result.error)
    result.seconds = time.perf_counter() - t0
    return result


def run_experiment_grid(
    dataset: Sequence[LabeledSeries],
    architectures: Sequence[str] = ARCHITECTURES,
    window_sizes: Sequence[int] = WINDOW_SIZES,
    cfg: GridConfig | None = None,
    train_series: Sequence[LabeledSeries] | None = None,
) -> GridResult:
    """Train every (architecture, window size) cell on one cycle-level split.

    `train_series` replaces the training half of the split (e.g. a copy with
    injected mislabels) while keeping the same test cycles.
    """
    cfg = cfg or GridConfig()
    for a in architectures:
        if a not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {a!r}")
    for ws in window_sizes:
        if ws < cfg.model.kernel:
            raise ConfigError(f"window size {ws} is shorter than the conv kernel")
    train_cycles, test_cycles = split_dataset(dataset, cfg.pipeline.split_ratio, cfg.pipeline.split_seed)
    if train_series is not None:
        train_cycles = list(train_series)
    cells = []
    for ws in window_sizes:
        train_set, test_set = prepare(train_cycles, test_cycles, ws, cfg.pipeline)
        for arch in architectures:
            cell = run_cell(arch, ws, train_set, test_set, cfg)
            log.info("%s ws=%d done in %.1fs", arch, ws, cell.seconds)
            cells.append(cell)
    return GridResult(cells)


def mean_micro_f1_by_arch(grids: Sequence[GridResult]) -> dict[str, float]:
    scores: dict[str, list[float]] = {}
    for g in grids:
        for c in g.cells:
            if c.error is None:
                scores.setdefault(c.arch, []).append(c.metrics["micro_f1"])
    return {a: float(np.mean(v)) for a, v in scores.items()}
