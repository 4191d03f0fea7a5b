"""Layers, forward/backward passes and the CRDNN model.

Sequence tensors are laid out (batch, time, features). Dense weights are
stored (out, in) so that a layer computes ``W @ x + b``; LSTM gate weights
are (hidden, hidden + input) acting on the concatenation ``[a_prev, x]``.
All gradients are derived by hand per layer kind.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import loss as loss_mod
from .errors import ConfigError, InputError, ShapeError, StateError

ARCHITECTURES = ("1lstm", "2lstm", "2bilstm")


def sigmoid(z: np.ndarray) -> np.ndarray:
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def relu(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def dense_forward(weights: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    if weights.shape[1] != x.shape[-1] or weights.shape[0] != bias.shape[0]:
        raise ShapeError(f"dense {weights.shape} cannot take input of width {x.shape[-1]}")
    return x @ weights.T + bias


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_out, fan_in))


class Layer:
    kind = "Layer"

    def __init__(self, name: str):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def spec(self) -> dict:
        return {"kind": self.kind, "name": self.name}

    def out_width(self, in_width: int) -> int:
        return in_width

    def forward(self, x: np.ndarray, training: bool = False, rng: np.random.Generator | None = None):
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grads(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class Conv1D(Layer):
    """Same-length 1-D cross-correlation, zero padded at both ends."""

    kind = "Conv1D"

    def __init__(self, name, channels, filters, kernel, rng=None):
        super().__init__(name)
        if kernel % 2 != 1:
            raise ConfigError(f"conv kernel width must be odd, got {kernel}")
        self.channels, self.filters, self.kernel = channels, filters, kernel
        rng = rng or np.random.default_rng(0)
        self.params = {
            "w": glorot(rng, filters, channels * kernel, (filters, kernel, channels)),
            "b": np.zeros(filters),
        }
        self.zero_grads()

    def spec(self):
        return {**super().spec(), "channels": self.channels, "filters": self.filters, "kernel": self.kernel}

    def out_width(self, in_width):
        if in_width != self.channels:
            raise ConfigError(f"{self.name}: expects {self.channels} channels, got {in_width}")
        return self.filters

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.channels:
            raise ShapeError(f"{self.name}: input has {x.shape[-1]} channels, kernel depth is {self.channels}")
        if x.shape[1] < self.kernel:
            raise ShapeError(f"{self.name}: {x.shape[1]} timesteps is shorter than kernel {self.kernel}")
        pad = self.kernel // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
        # (B, T, C, K) -> (B, T, K*C) ordered like w[f, k, c]
        cols = sliding_window_view(xp, self.kernel, axis=1).transpose(0, 1, 3, 2)
        cols = cols.reshape(x.shape[0], x.shape[1], self.kernel * self.channels)
        self._cols = cols
        self._xshape = x.shape
        return cols @ self.params["w"].reshape(self.filters, -1).T + self.params["b"]

    def backward(self, dout):
        B, T, C = self._xshape
        wr = self.params["w"].reshape(self.filters, -1)
        self.grads["w"] += np.einsum("btf,btk->fk", dout, self._cols).reshape(self.params["w"].shape)
        self.grads["b"] += dout.sum(axis=(0, 1))
        dcols = (dout @ wr).reshape(B, T, self.kernel, C)
        dxp = np.zeros((B, T + self.kernel - 1, C))
        for k in range(self.kernel):
            dxp[:, k : k + T] += dcols[:, :, k]
        pad = self.kernel // 2
        return dxp[:, pad : pad + T]


class Dense(Layer):
    """Affine map over the last axis; works per timestep on sequences."""

    kind = "Dense"

    def __init__(self, name, n_in, n_out, rng=None, per_step=False):
        super().__init__(name)
        self.n_in, self.n_out = n_in, n_out
        self.kind = "DensePerStep" if per_step else "DenseHead"
        rng = rng or np.random.default_rng(0)
        self.params = {"w": glorot(rng, n_out, n_in), "b": np.zeros(n_out)}
        self.zero_grads()

    def spec(self):
        return {**super().spec(), "n_in": self.n_in, "n_out": self.n_out}

    def out_width(self, in_width):
        if in_width != self.n_in:
            raise ConfigError(f"{self.name}: expects width {self.n_in}, got {in_width}")
        return self.n_out

    def forward(self, x, training=False, rng=None):
        self._x = x
        return dense_forward(self.params["w"], self.params["b"], x)

    def backward(self, dout):
        x2 = self._x.reshape(-1, self.n_in)
        d2 = dout.reshape(-1, self.n_out)
        self.grads["w"] += d2.T @ x2
        self.grads["b"] += d2.sum(axis=0)
        return dout @ self.params["w"]


class Relu(Layer):
    kind = "Relu"

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.maximum(x, 0.0)  # keeps NaN visible downstream

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class Dropout(Layer):
    """Inverted dropout: scaled at training time, identity at inference."""

    kind = "Dropout"

    def __init__(self, name, rate):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def spec(self):
        return {**super().spec(), "rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise StateError("dropout in training mode needs an rng")
        self._mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, training=False, rng=None):
        self._out = softmax(x)
        return self._out

    def backward(self, dout):
        s = self._out
        return s * (dout - np.sum(dout * s, axis=-1, keepdims=True))


# --------------------------------------------------------------------------- LSTM

GATES = ("candidate", "update", "forget", "output")


@dataclass
class LstmCellParams:
    w_candidate: np.ndarray
    w_update: np.ndarray
    w_forget: np.ndarray
    w_output: np.ndarray
    b_candidate: np.ndarray
    b_update: np.ndarray
    b_forget: np.ndarray
    b_output: np.ndarray

    def __post_init__(self):
        shapes = {getattr(self, f"w_{g}").shape for g in GATES}
        lengths = {getattr(self, f"b_{g}").shape for g in GATES}
        if len(shapes) != 1 or len(lengths) != 1:
            raise ShapeError("all four gate weights (and biases) must share one shape")
        (h, hx), = shapes
        if lengths != {(h,)} or hx <= h:
            raise ShapeError(f"gate weights {(h, hx)} do not match bias length {lengths}")

    @property
    def hidden(self) -> int:
        return self.w_candidate.shape[0]

    @property
    def n_input(self) -> int:
        return self.w_candidate.shape[1] - self.hidden

    def n_params(self) -> int:
        return 4 * (self.w_candidate.size + self.hidden)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in (f"w_{g}" for g in GATES)} | {
            k: getattr(self, k) for k in (f"b_{g}" for g in GATES)
        }

    @classmethod
    def init(cls, n_input, hidden, rng, forget_bias=1.0):
        ws = {f"w_{g}": glorot(rng, hidden, hidden + n_input) for g in GATES}
        bs = {f"b_{g}": np.zeros(hidden) for g in GATES}
        bs["b_forget"] += forget_bias
        return cls(**ws, **bs)

    @classmethod
    def zeros(cls, n_input, hidden):
        return cls(
            **{f"w_{g}": np.zeros((hidden, hidden + n_input)) for g in GATES},
            **{f"b_{g}": np.zeros(hidden) for g in GATES},
        )


@dataclass
class LstmState:
    cell: np.ndarray
    activation: np.ndarray

    @classmethod
    def zeros(cls, hidden):
        return cls(np.zeros(hidden), np.zeros(hidden))


def lstm_step(params: LstmCellParams, prev: LstmState, x: np.ndarray) -> LstmState:
    """One LSTM cell update written gate by gate."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_input,):
        raise ShapeError(f"input of length {x.shape} for a cell with {params.n_input} inputs")
    ax = np.concatenate([prev.activation, x])
    c_tilde = np.tanh(params.w_candidate @ ax + params.b_candidate)
    g_update = sigmoid(params.w_update @ ax + params.b_update)
    g_forget = sigmoid(params.w_forget @ ax + params.b_forget)
    g_output = sigmoid(params.w_output @ ax + params.b_output)
    cell = g_update * c_tilde + g_forget * prev.cell
    return LstmState(cell=cell, activation=g_output * np.tanh(cell))


def _stacked(p: LstmCellParams):
    w = np.concatenate([p.w_candidate, p.w_update, p.w_forget, p.w_output], axis=0)
    b = np.concatenate([p.b_candidate, p.b_update, p.b_forget, p.b_output])
    return w, b


def _lstm_run(p: LstmCellParams, x: np.ndarray, a0=None, c0=None):
    """Batched forward over (B, T, I). Returns activations (B, T, H) and a cache.

    Internals are time-major so each step touches contiguous memory.
    """
    B, T, _ = x.shape
    H = p.hidden
    w, b = _stacked(p)
    wh, wx = w[:, :H], w[:, H:]
    xt = np.ascontiguousarray(x.transpose(1, 0, 2))
    xproj = xt @ wx.T + b
    whT = np.ascontiguousarray(wh.T)
    acts = np.empty((T, B, 4 * H))
    cells = np.empty((T + 1, B, H))
    outs = np.empty((T + 1, B, H))
    cells[0] = 0.0 if c0 is None else c0
    outs[0] = 0.0 if a0 is None else a0
    for t in range(T):
        g = acts[t]
        np.matmul(outs[t], whT, out=g)
        g += xproj[t]
        np.tanh(g[:, :H], out=g[:, :H])
        g[:, H:] = sigmoid(g[:, H:])
        c = cells[t + 1]
        np.multiply(g[:, H : 2 * H], g[:, :H], out=c)
        c += g[:, 2 * H : 3 * H] * cells[t]
        np.multiply(g[:, 3 * H :], np.tanh(c), out=outs[t + 1])
    return outs[1:].transpose(1, 0, 2), (xt, wh, wx, acts, cells, outs)


def _lstm_backprop(cache, dout):
    """Backprop through time; returns (dx, dw_stacked, db_stacked)."""
    xt, wh, wx, acts, cells, outs = cache
    T, B, _ = xt.shape
    H = wh.shape[1]
    dout = dout.transpose(1, 0, 2)
    dz_all = np.empty((T, B, 4 * H))
    da = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        g = acts[t]
        cand, upd, fgt, outg = g[:, :H], g[:, H : 2 * H], g[:, 2 * H : 3 * H], g[:, 3 * H :]
        tc = np.tanh(cells[t + 1])
        da += dout[t]
        dc += da * outg * (1.0 - tc * tc)
        dz = dz_all[t]
        dz[:, :H] = dc * upd * (1.0 - cand * cand)
        dz[:, H : 2 * H] = dc * cand * upd * (1.0 - upd)
        dz[:, 2 * H : 3 * H] = dc * cells[t] * fgt * (1.0 - fgt)
        dz[:, 3 * H :] = da * tc * outg * (1.0 - outg)
        dc *= fgt
        da = dz @ wh
    dz2 = dz_all.reshape(T * B, 4 * H)
    dwx = dz2.T @ xt.reshape(T * B, -1)
    dwh = dz2.T @ outs[:-1].reshape(T * B, H)
    dx = (dz_all @ wx).transpose(1, 0, 2)
    return dx, np.concatenate([dwh, dwx], axis=1), dz2.sum(axis=0)


def lstm_sequence_forward(params: LstmCellParams, window: np.ndarray, initial: LstmState | None = None) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2 or window.shape[0] == 0:
        raise InputError("lstm_sequence_forward needs a non-empty (time, features) window")
    if window.shape[1] != params.n_input:
        raise ShapeError(f"window width {window.shape[1]} != cell input size {params.n_input}")
    a0 = c0 = None
    if initial is not None:
        a0, c0 = initial.activation[None, :], initial.cell[None, :]
    out, _ = _lstm_run(params, window[None], a0, c0)
    return out[0]


def bilstm_sequence_forward(fwd_params: LstmCellParams, bwd_params: LstmCellParams, window: np.ndarray) -> np.ndarray:
    if fwd_params.hidden != bwd_params.hidden:
        raise ShapeError(f"direction hidden sizes differ: {fwd_params.hidden} vs {bwd_params.hidden}")
    fwd = lstm_sequence_forward(fwd_params, window)
    bwd = lstm_sequence_forward(bwd_params, np.asarray(window)[::-1])[::-1]
    return np.concatenate([fwd, bwd], axis=1)


class Lstm(Layer):
    kind = "Lstm"

    def __init__(self, name, n_input, hidden, rng=None, forget_bias=1.0):
        super().__init__(name)
        self.n_input, self.hidden = n_input, hidden
        self.cell = LstmCellParams.init(n_input, hidden, rng or np.random.default_rng(0), forget_bias)
        self.params = self.cell.as_dict()
        self.zero_grads()

    def spec(self):
        return {**super().spec(), "n_input": self.n_input, "hidden": self.hidden}

    def out_width(self, in_width):
        if in_width != self.n_input:
            raise ConfigError(f"{self.name}: expects width {self.n_input}, got {in_width}")
        return self.hidden

    def forward(self, x, training=False, rng=None):
        out, self._cache = _lstm_run(self.cell, x)
        return out

    def backward(self, dout):
        dx, dw, db = _lstm_backprop(self._cache, dout)
        _scatter_gate_grads(self.grads, "", dw, db, self.hidden)
        return dx


def _scatter_gate_grads(grads, prefix, dw, db, H):
    for i, g in enumerate(GATES):
        grads[f"{prefix}w_{g}"] += dw[i * H : (i + 1) * H]
        grads[f"{prefix}b_{g}"] += db[i * H : (i + 1) * H]


class BiLstm(Layer):
    """Forward and time-reversed LSTM, outputs concatenated per timestep as [fwd, bwd]."""

    kind = "BiLstm"

    def __init__(self, name, n_input, hidden, rng=None, forget_bias=1.0):
        super().__init__(name)
        self.n_input, self.hidden = n_input, hidden
        rng = rng or np.random.default_rng(0)
        self.fwd = LstmCellParams.init(n_input, hidden, rng, forget_bias)
        self.bwd = LstmCellParams.init(n_input, hidden, rng, forget_bias)
        self.params = {f"fwd.{k}": v for k, v in self.fwd.as_dict().items()}
        self.params |= {f"bwd.{k}": v for k, v in self.bwd.as_dict().items()}
        self.zero_grads()

    def spec(self):
        return {**super().spec(), "n_input": self.n_input, "hidden": self.hidden}

    def out_width(self, in_width):
        if in_width != self.n_input:
            raise ConfigError(f"{self.name}: expects width {self.n_input}, got {in_width}")
        return 2 * self.hidden

    def forward(self, x, training=False, rng=None):
        f, self._fcache = _lstm_run(self.fwd, x)
        b, self._bcache = _lstm_run(self.bwd, x[:, ::-1])
        return np.concatenate([f, b[:, ::-1]], axis=2)

    def backward(self, dout):
        H = self.hidden
        dxf, dwf, dbf = _lstm_backprop(self._fcache, dout[:, :, :H])
        dxb, dwb, dbb = _lstm_backprop(self._bcache, dout[:, ::-1, H:])
        _scatter_gate_grads(self.grads, "fwd.", dwf, dbf, H)
        _scatter_gate_grads(self.grads, "bwd.", dwb, dbb, H)
        return dxf + dxb[:, ::-1]


class FinalStep(Layer):
    """Sequence readout: last forward activation (and, if bidirectional, the
    backward direction's final activation, which sits at time index 0)."""

    kind = "FinalStep"

    def __init__(self, name, bidirectional=False, hidden=0):
        super().__init__(name)
        self.bidirectional, self.hidden = bidirectional, hidden

    def spec(self):
        return {**super().spec(), "bidirectional": self.bidirectional, "hidden": self.hidden}

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        if not self.bidirectional:
            return x[:, -1, :]
        H = self.hidden
        return np.concatenate([x[:, -1, :H], x[:, 0, H:]], axis=1)

    def backward(self, dout):
        dx = np.zeros(self._shape)
        if not self.bidirectional:
            dx[:, -1, :] = dout
        else:
            H = self.hidden
            dx[:, -1, :H] = dout[:, :H]
            dx[:, 0, H:] = dout[:, H:]
        return dx


def conv1d_forward(x: np.ndarray, filters: np.ndarray, biases: np.ndarray) -> np.ndarray:
    """Same-padded cross-correlation of a (time, channels) input with (filters, kernel, channels) kernels."""
    x = np.asarray(x, dtype=np.float64)
    filters = np.asarray(filters, dtype=np.float64)
    n_f, k, c = filters.shape
    if x.ndim != 2 or x.shape[1] != c:
        raise ShapeError(f"input shape {x.shape} does not match kernel depth {c}")
    layer = Conv1D("conv", c, n_f, k)
    layer.params["w"] = filters
    layer.params["b"] = np.asarray(biases, dtype=np.float64)
    return layer.forward(x[None])[0]


# --------------------------------------------------------------------------- model


@dataclass
class ModelConfig:
    arch: str = "2lstm"
    channels: int = 5
    conv_filters: int = 10
    kernel: int = 5
    reduce_units: tuple[int, ...] = (32, 32)
    rnn_units: int = 32
    dense_units: tuple[int, ...] = (32, 32)
    n_classes: int = 3
    dropout: float = 0.2
    forget_bias: float = 1.0

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"arch must be one of {ARCHITECTURES}, got {self.arch!r}")
        self.reduce_units = tuple(self.reduce_units)
        self.dense_units = tuple(self.dense_units)

    def to_dict(self):
        return asdict(self)


class CrdnnModel:
    """conv1D -> per-step dense -> LSTM/BiLSTM stack -> final step -> dense -> softmax."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.layers = _build_layers(config, np.random.default_rng(seed))
        self._check_composition()
        self._cache_ready = False

    @property
    def n_classes(self):
        return self.config.n_classes

    @property
    def channels(self):
        return self.config.channels

    def _check_composition(self):
        width = self.config.channels
        for layer in self.layers:
            width = layer.out_width(width)
        if width != self.config.n_classes:
            raise ConfigError(f"stack ends in width {width}, expected {self.config.n_classes}")

    def layer_specs(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def named_params(self) -> Iterator[tuple[str, np.ndarray]]:
        for layer in self.layers:
            for k, v in layer.params.items():
                yield f"{layer.name}.{k}", v

    def named_grads(self) -> Iterator[tuple[str, np.ndarray]]:
        for layer in self.layers:
            for k in layer.params:
                yield f"{layer.name}.{k}", layer.grads[k]

    def param_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_params())

    def get_state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.named_params()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in self.named_params():
            v[...] = state[k]

    def forward(self, windows: np.ndarray, training: bool = False, rng: np.random.Generator | None = None) -> np.ndarray:
        """Class probabilities for a (batch, time, channels) array or a single (time, channels) window."""
        x = np.asarray(windows, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        if x.ndim != 3 or x.shape[2] != self.config.channels:
            raise ShapeError(f"expected (*, time, {self.config.channels}) input, got {np.shape(windows)}")
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        self._probs = x
        self._cache_ready = True
        return x[0] if single else x

    def predict_proba(self, windows: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        if len(windows) == 0:
            return np.zeros((0, self.n_classes))
        out = [self.forward(windows[i : i + batch_size]) for i in range(0, len(windows), batch_size)]
        self._cache_ready = False
        return np.concatenate(out)

    def regularized_weights(self, selector: str = "head") -> list[np.ndarray]:
        dense = [layer for layer in self.layers if isinstance(layer, Dense)]
        if selector == "head":
            dense = dense[-2:]
        elif selector != "all_dense":
            raise ConfigError(f"unknown regularized_layers {selector!r}")
        return [layer.params["w"] for layer in dense]

    def backward(self, targets: np.ndarray, loss_cfg: loss_mod.LossConfig) -> dict[str, np.ndarray]:
        """Gradients of the full cost for the most recent forward pass."""
        if not self._cache_ready:
            raise StateError("backward called without a preceding forward pass")
        probs = self._probs
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        if targets.shape != probs.shape:
            raise ShapeError(f"targets {targets.shape} vs predictions {probs.shape}")
        for layer in self.layers:
            layer.zero_grads()
        d = loss_mod.data_cost_grad(probs, targets, loss_cfg.class_weights)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        m = probs.shape[0]
        if loss_cfg.l2_lambda:
            reg = {id(w) for w in self.regularized_weights(loss_cfg.regularized_layers)}
            for layer in self.layers:
                if isinstance(layer, Dense) and id(layer.params["w"]) in reg:
                    layer.grads["w"] += loss_cfg.l2_lambda / m * layer.params["w"]
        self._cache_ready = False
        return dict(self.named_grads())

    def loss_and_grads(self, windows, targets, loss_cfg, training=False, rng=None):
        probs = self.forward(windows, training=training, rng=rng)
        cost = loss_mod.weighted_cost(probs, targets, self, loss_cfg)
        return cost, self.backward(targets, loss_cfg)


def _build_layers(cfg: ModelConfig, rng: np.random.Generator) -> list[Layer]:
    layers: list[Layer] = [Conv1D("conv", cfg.channels, cfg.conv_filters, cfg.kernel, rng), Relu("conv_relu")]
    width = cfg.conv_filters
    for i, units in enumerate(cfg.reduce_units, 1):
        layers += [
            Dense(f"reduce{i}", width, units, rng, per_step=True),
            Relu(f"reduce{i}_relu"),
            Dropout(f"reduce{i}_drop", cfg.dropout),
        ]
        width = units
    n_rnn = 1 if cfg.arch == "1lstm" else 2
    bidir = cfg.arch == "2bilstm"
    for i in range(1, n_rnn + 1):
        if bidir:
            layers.append(BiLstm(f"bilstm{i}", width, cfg.rnn_units, rng, cfg.forget_bias))
            width = 2 * cfg.rnn_units
        else:
            layers.append(Lstm(f"lstm{i}", width, cfg.rnn_units, rng, cfg.forget_bias))
            width = cfg.rnn_units
        layers.append(Dropout(f"rnn{i}_drop", cfg.dropout))
    layers.append(FinalStep("final_step", bidirectional=bidir, hidden=cfg.rnn_units))
    for i, units in enumerate(cfg.dense_units, 1):
        layers += [Dense(f"dense{i}", width, units, rng), Relu(f"dense{i}_relu"), Dropout(f"dense{i}_drop", cfg.dropout)]
        width = units
    layers += [Dense("head", width, cfg.n_classes, rng), Softmax("softmax")]
    return layers


def build_model(config: ModelConfig | None = None, seed: int = 0, **overrides) -> CrdnnModel:
    config = config or ModelConfig(**overrides)
    return CrdnnModel(config, seed)


def model_forward(model: CrdnnModel, window: np.ndarray) -> np.ndarray:
    return model.forward(window, training=False)


def model_backward(model: CrdnnModel, window, target, loss_cfg) -> dict[str, np.ndarray]:
    return model.backward(target, loss_cfg)


def layer_param_count(spec: dict) -> int:
    """Analytic trainable-parameter count of one layer spec."""
    kind = spec["kind"]
    if kind == "Conv1D":
        return spec["channels"] * spec["kernel"] * spec["filters"] + spec["filters"]
    if kind in ("DensePerStep", "DenseHead"):
        return spec["n_in"] * spec["n_out"] + spec["n_out"]
    if kind == "Lstm":
        return 4 * ((spec["n_input"] + spec["hidden"]) * spec["hidden"] + spec["hidden"])
    if kind == "BiLstm":
        return 2 * layer_param_count({**spec, "kind": "Lstm"})
    return 0


def count_parameters(model: CrdnnModel) -> int:
    return sum(layer_param_count(s) for s in model.layer_specs())
