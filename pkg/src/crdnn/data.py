"""Telemetry containers and the preparation pipeline (smoothing, normalization,
decimated sliding windows, cycle-level split, mislabel injection)."""

from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np
from scipy.signal import lfilter

from . import LOADING, TRAVEL, UNLOADING
from .errors import InputError

SAMPLE_RATE = 50.0
DT = 1.0 / SAMPLE_RATE
CHANNELS = ("bucket_dp", "velocity", "joystick_dir", "drive_dp", "boom_dp")
UNITS = ("bar", "m/s", "-", "bar", "bar")
JOYSTICK = CHANNELS.index("joystick_dir")
WINDOW_SIZES = (9, 15, 25)


@dataclass(frozen=True)
class TelemetryFrame:
    t: float
    bucket_dp: float
    velocity: float
    joystick_dir: float
    drive_dp: float
    boom_dp: float


@dataclass
class LabeledSeries:
    """One recording: (n,) timestamps, (n, 5) channels in CHANNELS order, (n,) labels."""

    t: np.ndarray
    channels: np.ndarray
    labels: np.ndarray
    meta: dict = field(default_factory=dict)
    # (start, stop, original_label) spans relabeled as travel on purpose
    flips: list[tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.labels) != len(self.t) or self.channels.shape != (len(self.t), len(CHANNELS)):
            raise InputError(
                f"inconsistent series lengths: t {self.t.shape}, channels {self.channels.shape}, labels {self.labels.shape}"
            )

    def __len__(self):
        return len(self.t)

    def frames(self) -> Iterator[TelemetryFrame]:
        for ti, row in zip(self.t, self.channels):
            yield TelemetryFrame(float(ti), *map(float, row))

    def with_channels(self, channels: np.ndarray) -> "LabeledSeries":
        return replace(self, channels=channels, meta=dict(self.meta), flips=list(self.flips))

    def original_labels(self) -> np.ndarray:
        """Labels with every recorded flip undone."""
        labels = self.labels.copy()
        for start, stop, orig in self.flips:
            labels[start:stop] = orig
        return labels

    def check_sampling(self, tol: float = 1e-9) -> bool:
        return len(self.t) < 2 or bool(np.all(np.abs(np.diff(self.t) - DT) <= tol))


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    # fingerprint of the series the statistics were computed from
    source: str = ""

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "source": self.source}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], float), np.asarray(d["std"], float), d.get("source", ""))


@dataclass
class WindowBatch:
    windows: np.ndarray  # (n, w, channels)
    targets: np.ndarray  # (n, 3) one-hot
    labels: np.ndarray  # (n,) class index of the target
    window_size: int
    decimation: int
    stride: int
    series_index: np.ndarray  # (n,) which series each window came from
    end_frame: np.ndarray  # (n,) raw frame index carrying the label
    true_labels: np.ndarray | None = None  # labels before mislabel injection
    stats: NormStats | None = None

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "WindowBatch":
        return replace(
            self,
            windows=self.windows[idx],
            targets=self.targets[idx],
            labels=self.labels[idx],
            series_index=self.series_index[idx],
            end_frame=self.end_frame[idx],
            true_labels=None if self.true_labels is None else self.true_labels[idx],
        )


def one_hot(labels: np.ndarray, n_classes: int = 3) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def smoothing_alpha(tau: float, dt: float = DT) -> float:
    return dt / (tau + dt)


def smooth(series: LabeledSeries, alpha: float | None = None, tau: float = 0.2) -> LabeledSeries:
    """First-order low-pass on every continuous channel; the joystick channel passes through."""
    if alpha is None:
        alpha = smoothing_alpha(tau)
    x = series.channels
    if len(x) == 0:
        return series.with_channels(x.copy())
    zi = (1.0 - alpha) * x[0:1]
    y, _ = lfilter([alpha], [1.0, -(1.0 - alpha)], x, axis=0, zi=zi)
    y[:, JOYSTICK] = x[:, JOYSTICK]
    return series.with_channels(y)


def fingerprint(series: Sequence[LabeledSeries]) -> str:
    ids = ",".join(str(s.meta.get("cycle_id", i)) for i, s in enumerate(series))
    return hashlib.sha256(ids.encode()).hexdigest()[:16]


def compute_stats(series: Sequence[LabeledSeries]) -> NormStats:
    stacked = np.concatenate([s.channels for s in series])
    return NormStats(stacked.mean(axis=0), stacked.std(axis=0), fingerprint(series))


def normalize(series, stats: NormStats | None = None):
    """Z-score channels. Without `stats`, they are computed from `series` itself.

    Accepts one series or a list; returns the same shape plus the stats used.
    """
    single = isinstance(series, LabeledSeries)
    items = [series] if single else list(series)
    if stats is None:
        stats = compute_stats(items)
    flat = stats.std == 0
    if np.any(flat):
        names = [CHANNELS[i] for i in np.flatnonzero(flat)]
        warnings.warn(f"zero-variance channel(s) {names} normalized to zeros", RuntimeWarning, stacklevel=2)
    scale = np.where(flat, 0.0, 1.0 / np.where(flat, 1.0, stats.std))
    out = [s.with_channels((s.channels - stats.mean) * scale) for s in items]
    return (out[0] if single else out), stats


def window_count(n_frames: int, window_size: int, decimation: int, stride: int) -> int:
    span = (window_size - 1) * decimation + 1
    return 0 if n_frames < span else (n_frames - span) // stride + 1


def make_windows(
    series,
    window_size: int,
    decimation: int = 10,
    stride: int = 10,
    label_mode: str = "final",
    stats: NormStats | None = None,
) -> WindowBatch:
    """Decimated sliding windows over one series or a list of series.

    A window anchored at frame `a` holds frames a, a+d, ..., a+(w-1)d and is
    labeled by its last frame (or its middle element with label_mode="center").
    Windows never cross series boundaries.
    """
    items = [series] if isinstance(series, LabeledSeries) else list(series)
    if window_size < 1 or decimation < 1 or stride < 1:
        raise InputError("window size, decimation and stride must be positive")
    if label_mode not in ("final", "center"):
        raise InputError(f"unknown label_mode {label_mode!r}")
    offsets = np.arange(window_size) * decimation
    label_pos = offsets[-1] if label_mode == "final" else offsets[window_size // 2]
    wins, labels, true_labels, sidx, ends = [], [], [], [], []
    for i, s in enumerate(items):
        n = window_count(len(s), window_size, decimation, stride)
        if n == 0:
            if isinstance(series, LabeledSeries):
                raise InputError(
                    f"series of {len(s)} frames is shorter than one window ({offsets[-1] + 1} frames)"
                )
            continue
        anchors = np.arange(n) * stride
        idx = anchors[:, None] + offsets
        wins.append(s.channels[idx])
        lab_frame = anchors + label_pos
        labels.append(s.labels[lab_frame])
        true_labels.append(s.original_labels()[lab_frame])
        sidx.append(np.full(n, i))
        ends.append(lab_frame)
    if not wins:
        raise InputError("no series long enough for a single window")
    labels = np.concatenate(labels).astype(int)
    return WindowBatch(
        windows=np.concatenate(wins),
        targets=one_hot(labels),
        labels=labels,
        window_size=window_size,
        decimation=decimation,
        stride=stride,
        series_index=np.concatenate(sidx),
        end_frame=np.concatenate(ends),
        true_labels=np.concatenate(true_labels).astype(int),
        stats=stats,
    )


def split_dataset(cycles: Sequence[LabeledSeries], ratio: float = 0.8, seed: int = 0):
    """Whole-cycle train/test split. Cycles tagged force_train always train.

    The training share is floor(ratio * n); the rest is drawn from untagged cycles.
    """
    cycles = list(cycles)
    n = len(cycles)
    if n < 2:
        raise InputError(f"need at least 2 cycles to split, got {n}")
    n_test = n - int(math.floor(ratio * n + 1e-9))
    free = [i for i, c in enumerate(cycles) if not c.meta.get("force_train", False)]
    if n_test > len(free):
        raise InputError(f"{n_test} test cycles requested but only {len(free)} are not forced into training")
    rng = np.random.default_rng(seed)
    test_idx = set(rng.permutation(free)[:n_test].tolist())
    train = [c for i, c in enumerate(cycles) if i not in test_idx]
    test = [c for i, c in enumerate(cycles) if i in test_idx]
    return train, test


def _working_runs(labels: np.ndarray):
    """(start, stop, label) of maximal runs of loading or unloading frames."""
    runs = []
    edges = np.flatnonzero(np.diff(labels)) + 1
    bounds = np.concatenate([[0], edges, [len(labels)]])
    for a, b in zip(bounds[:-1], bounds[1:]):
        if labels[a] in (LOADING, UNLOADING):
            runs.append((int(a), int(b), int(labels[a])))
    return runs


def inject_mislabels(
    series: Sequence[LabeledSeries],
    rate: float,
    rule: str = "chunk",
    seed: int = 0,
    chunk_s: float = 1.0,
) -> list[LabeledSeries]:
    """Relabel parts of loading/unloading spans as travel until `rate` of all frames are flipped.

    rule "chunk" flips `chunk_s`-long pieces inside working spans; "segment" flips whole spans.
    Each returned series records its flips in `.flips`.
    """
    if not 0.0 <= rate <= 0.05:
        raise InputError(f"mislabel rate must lie in [0, 0.05], got {rate}")
    if rule not in ("chunk", "segment"):
        raise InputError(f"unknown mislabel rule {rule!r}")
    out = [replace(s, labels=s.labels.copy(), meta=dict(s.meta), flips=list(s.flips)) for s in series]
    target = int(math.ceil(rate * sum(len(s) for s in out)))
    if target == 0:
        return out
    rng = np.random.default_rng(seed)
    candidates = [(i, a, b, lab) for i, s in enumerate(out) for a, b, lab in _working_runs(s.labels)]
    if not candidates:
        raise InputError("no loading/unloading spans to mislabel")
    chunk = max(1, int(round(chunk_s * SAMPLE_RATE)))
    flipped = 0
    for k in rng.permutation(len(candidates)):
        if flipped >= target:
            break
        i, a, b, lab = candidates[k]
        if rule == "chunk" and b - a > chunk:
            a = int(rng.integers(a, b - chunk + 1))
            b = a + chunk
        out[i].labels[a:b] = TRAVEL
        out[i].flips.append((a, b, lab))
        flipped += b - a
    return out


@dataclass
class PipelineConfig:
    tau: float = 0.2
    decimation: int = 10
    stride: int = 10
    label_mode: str = "final"
    split_ratio: float = 0.8
    split_seed: int = 0


def prepare(
    train_series: Sequence[LabeledSeries],
    test_series: Sequence[LabeledSeries],
    window_size: int,
    cfg: PipelineConfig | None = None,
):
    """Smooth, normalize with training statistics, and window both splits."""
    cfg = cfg or PipelineConfig()
    tr = [smooth(s, tau=cfg.tau) for s in train_series]
    te = [smooth(s, tau=cfg.tau) for s in test_series]
    tr, stats = normalize(tr)
    te, _ = normalize(te, stats)
    kw = dict(decimation=cfg.decimation, stride=cfg.stride, label_mode=cfg.label_mode, stats=stats)
    train = make_windows(tr, window_size, **kw)
    test = make_windows(te, window_size, **kw) if te else None
    return train, test


def prepare_inference(series: Sequence[LabeledSeries], window_size: int, stats: NormStats, cfg: PipelineConfig):
    """Same transformation as training, with stored statistics."""
    sm = [smooth(s, tau=cfg.tau) for s in series]
    sm, _ = normalize(sm, stats)
    return make_windows(sm, window_size, decimation=cfg.decimation, stride=cfg.stride, label_mode=cfg.label_mode, stats=stats)
