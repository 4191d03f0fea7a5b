import hashlib
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from crdnn.errors import ConfigError, InputError, ShapeError, StateError
from crdnn.gradcheck import probe_gradients
from crdnn.loss import LossConfig, weighted_cost
from crdnn.nn import (
    BiLstm,
    Conv1D,
    CrdnnModel,
    Dense,
    Dropout,
    Lstm,
    LstmCellParams,
    LstmState,
    ModelConfig,
    Relu,
    Softmax,
    bilstm_sequence_forward,
    build_model,
    conv1d_forward,
    count_parameters,
    dense_forward,
    layer_param_count,
    lstm_sequence_forward,
    lstm_step,
    relu,
    softmax,
)


def brute_force_conv(x, w, b):
    T, C = x.shape
    F, K, _ = w.shape
    pad = K // 2
    out = np.zeros((T, F))
    for t in range(T):
        for f in range(F):
            acc = b[f]
            for k in range(K):
                src = t + k - pad
                if 0 <= src < T:
                    for c in range(C):
                        acc += x[src, c] * w[f, k, c]
            out[t, f] = acc
    return out


class TestConv:
    def test_delta_kernel_is_identity(self, rng):
        x = rng.normal(size=(12, 1))
        w = np.array([0.0, 1.0, 0.0]).reshape(1, 3, 1)
        np.testing.assert_array_equal(conv1d_forward(x, w, np.zeros(1)), x)

    def test_zero_input_gives_bias(self):
        out = conv1d_forward(np.zeros((9, 5)), np.ones((4, 5, 5)), np.array([0.5, -1, 2, 3]))
        assert np.all(out == np.array([0.5, -1, 2, 3]))

    def test_matches_nested_loop_oracle(self, rng):
        x = rng.normal(size=(20, 5))
        w = rng.normal(size=(10, 5, 5))
        b = rng.normal(size=10)
        np.testing.assert_allclose(conv1d_forward(x, w, b), brute_force_conv(x, w, b), rtol=0, atol=1e-12)

    def test_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            conv1d_forward(rng.normal(size=(10, 4)), rng.normal(size=(2, 5, 5)), np.zeros(2))

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            Conv1D("c", 5, 10, 4)


# weights act on [a_prev, x]; hidden 1, input 1
SCALAR = dict(
    w_candidate=[[0.5, -0.3]], w_update=[[0.8, 0.2]], w_forget=[[-0.4, 0.6]], w_output=[[0.3, 0.9]],
    b_candidate=[0.1], b_update=[-0.2], b_forget=[0.3], b_output=[0.05],
)


def scalar_params():
    return LstmCellParams(**{k: np.array(v, dtype=float) for k, v in SCALAR.items()})


def hand_step(a, c, x):
    sig = lambda z: 1.0 / (1.0 + math.exp(-z))
    ct = math.tanh(0.5 * a - 0.3 * x + 0.1)
    u = sig(0.8 * a + 0.2 * x - 0.2)
    f = sig(-0.4 * a + 0.6 * x + 0.3)
    o = sig(0.3 * a + 0.9 * x + 0.05)
    c2 = u * ct + f * c
    return o * math.tanh(c2), c2


class TestLstm:
    def test_zero_parameters(self):
        p = LstmCellParams.zeros(3, 4)
        s = lstm_step(p, LstmState.zeros(4), np.array([1.0, -2.0, 3.0]))
        assert np.all(s.cell == 0) and np.all(s.activation == 0)

    def test_scalar_hand_evaluation(self):
        s = lstm_step(scalar_params(), LstmState(np.array([-0.5]), np.array([0.2])), np.array([1.5]))
        a, c = hand_step(0.2, -0.5, 1.5)
        # frozen from the scalar evaluation above
        assert a == pytest.approx(-0.38470889056795315, abs=1e-15)
        assert c == pytest.approx(-0.5152843235574623, abs=1e-15)
        assert abs(s.activation[0] - a) < 1e-12 and abs(s.cell[0] - c) < 1e-12

    def test_forget_saturation_keeps_cell(self):
        p = LstmCellParams.zeros(2, 3)
        p.b_forget[:] = 50.0
        prev = LstmState(np.array([0.7, -1.3, 2.0]), np.zeros(3))
        s = lstm_step(p, prev, np.array([4.0, -4.0]))
        np.testing.assert_allclose(s.cell, prev.cell, atol=1e-12)

    def test_step_shape_error(self):
        with pytest.raises(ShapeError):
            lstm_step(LstmCellParams.zeros(2, 3), LstmState.zeros(3), np.zeros(3))

    def test_mismatched_gate_shapes(self):
        d = {k: np.array(v, dtype=float) for k, v in SCALAR.items()}
        d["w_forget"] = np.zeros((2, 3))
        with pytest.raises(ShapeError):
            LstmCellParams(**d)

    def test_param_count(self):
        assert LstmCellParams.zeros(32, 32).n_params() == 8320

    def test_single_step_sequence(self, rng):
        p = LstmCellParams.init(3, 4, rng)
        x = rng.normal(size=(1, 3))
        seq = lstm_sequence_forward(p, x)
        step = lstm_step(p, LstmState.zeros(4), x[0])
        np.testing.assert_allclose(seq[0], step.activation, rtol=0, atol=1e-14)

    def test_zero_sequence(self, rng):
        out = lstm_sequence_forward(LstmCellParams.zeros(3, 5), rng.normal(size=(7, 3)))
        assert out.shape == (7, 5) and np.all(out == 0)

    def test_two_steps_chained_by_hand(self):
        out = lstm_sequence_forward(scalar_params(), np.array([[1.5], [-0.7]]))
        a1, c1 = hand_step(0.0, 0.0, 1.5)
        a2, _ = hand_step(a1, c1, -0.7)
        assert a2 == pytest.approx(0.0021168765298402803, abs=1e-15)
        np.testing.assert_allclose(out[:, 0], [a1, a2], rtol=0, atol=1e-12)

    def test_sequence_equals_iterated_step(self, rng):
        p = LstmCellParams.init(3, 4, rng)
        x = rng.normal(size=(6, 3))
        state = LstmState(rng.normal(size=4), np.tanh(rng.normal(size=4)))
        out = lstm_sequence_forward(p, x, state)
        for t in range(6):
            state = lstm_step(p, state, x[t])
            np.testing.assert_allclose(out[t], state.activation, rtol=0, atol=1e-13)

    def test_empty_window(self):
        with pytest.raises(InputError):
            lstm_sequence_forward(LstmCellParams.zeros(3, 2), np.zeros((0, 3)))

    @given(
        x=hnp.arrays(np.float64, (5, 3), elements=st.floats(-50, 50)),
        seed=st.integers(0, 2**16),
        scale=st.floats(0.1, 20.0),
    )
    def test_activation_inside_unit_interval(self, x, seed, scale):
        p = LstmCellParams.init(3, 4, np.random.default_rng(seed))
        for k, v in p.as_dict().items():
            v *= scale
        out = lstm_sequence_forward(p, x)
        assert np.all(np.abs(out) <= 1.0)
        assert np.all(np.isfinite(out))


class TestBiLstm:
    def test_palindrome_symmetry(self, rng):
        p = LstmCellParams.init(2, 3, rng)
        half = rng.normal(size=(3, 2))
        x = np.concatenate([half, half[-2::-1]])  # length 5, palindromic
        out = bilstm_sequence_forward(p, p, x)
        T = len(x)
        for t in range(T):
            mirrored = np.concatenate([out[T - 1 - t, 3:], out[T - 1 - t, :3]])
            np.testing.assert_allclose(out[t], mirrored, rtol=0, atol=1e-15)

    def test_zero_parameters(self, rng):
        out = bilstm_sequence_forward(LstmCellParams.zeros(2, 3), LstmCellParams.zeros(2, 3), rng.normal(size=(4, 2)))
        assert out.shape == (4, 6) and np.all(out == 0)

    def test_composition_exact(self, rng):
        f, b = LstmCellParams.init(4, 3, rng), LstmCellParams.init(4, 3, rng)
        x = rng.normal(size=(3, 4))
        out = bilstm_sequence_forward(f, b, x)
        manual = np.concatenate([lstm_sequence_forward(f, x), lstm_sequence_forward(b, x[::-1])[::-1]], axis=1)
        assert np.array_equal(out, manual)

    def test_layer_equals_functional(self, rng):
        layer = BiLstm("b", 4, 3, rng)
        x = rng.normal(size=(2, 5, 4))
        out = layer.forward(x)
        for i in range(2):
            ref = bilstm_sequence_forward(layer.fwd, layer.bwd, x[i])
            np.testing.assert_allclose(out[i], ref, rtol=0, atol=1e-13)

    def test_hidden_mismatch(self, rng):
        with pytest.raises(ShapeError):
            bilstm_sequence_forward(LstmCellParams.zeros(2, 3), LstmCellParams.zeros(2, 4), np.zeros((3, 2)))


class TestSmallOps:
    def test_relu(self):
        assert relu(np.array(-1.0)) == 0 and relu(np.array(2.0)) == 2

    def test_softmax_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3, rtol=0, atol=1e-16)

    def test_dense_identity(self, rng):
        x = rng.normal(size=6)
        np.testing.assert_array_equal(dense_forward(np.eye(6), np.zeros(6), x), x)

    def test_dense_shape_error(self):
        with pytest.raises(ShapeError):
            dense_forward(np.eye(3), np.zeros(3), np.zeros(4))

    @given(hnp.arrays(np.float64, (4, 3), elements=st.floats(-700, 700)))
    def test_softmax_is_probability(self, v):
        s = softmax(v)
        assert np.all(s >= 0) and np.all(s <= 1)
        np.testing.assert_allclose(s.sum(axis=-1), 1.0, rtol=0, atol=1e-12)

    def test_dropout_rate_bounds(self):
        with pytest.raises(ConfigError):
            Dropout("d", 1.0)

    def test_dropout_inference_is_identity(self, rng):
        x = rng.normal(size=(3, 4))
        assert Dropout("d", 0.5).forward(x, training=False) is x


def zero_model(arch="2lstm"):
    m = build_model(ModelConfig(arch=arch, dropout=0.0))
    for _, p in m.named_params():
        p[...] = 0.0
    return m


class TestModel:
    def test_zero_parameters_uniform(self, rng):
        for arch in ("1lstm", "2lstm", "2bilstm"):
            out = zero_model(arch).forward(rng.normal(size=(15, 5)))
            np.testing.assert_array_equal(out, np.full(3, 1 / 3))

    @given(
        x=hnp.arrays(np.float64, (2, 9, 5), elements=st.floats(-1e3, 1e3)),
        arch=st.sampled_from(["1lstm", "2lstm", "2bilstm"]),
    )
    def test_probabilities_sum_to_one(self, x, arch):
        p = build_model(ModelConfig(arch=arch), seed=3).forward(x)
        assert np.all(np.isfinite(p))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_wrong_channel_count(self, rng):
        with pytest.raises(ShapeError):
            build_model().forward(rng.normal(size=(9, 4)))

    def test_non_composing_stack(self):
        m = build_model()
        m.layers[3] = Dense("reduce1", 11, 32)
        with pytest.raises(ConfigError):
            m._check_composition()

    def test_bad_arch(self):
        with pytest.raises(ConfigError):
            ModelConfig(arch="3lstm")

    def test_inference_ignores_rng(self, rng):
        m = build_model(ModelConfig(dropout=0.5), seed=1)
        x = rng.normal(size=(4, 9, 5))
        a = m.forward(x, training=False, rng=np.random.default_rng(1))
        b = m.forward(x, training=False, rng=np.random.default_rng(2))
        assert np.array_equal(a, b)

    def test_forward_bytes_identical_across_processes(self):
        code = (
            "import hashlib, numpy as np\n"
            "from crdnn.nn import build_model, ModelConfig\n"
            "m = build_model(ModelConfig(arch='2bilstm', rnn_units=4, reduce_units=(6,), dense_units=(5,)), seed=11)\n"
            "x = np.random.default_rng(5).normal(size=(3, 9, 5))\n"
            "print(hashlib.sha256(m.forward(x).tobytes()).hexdigest())\n"
        )
        runs = [subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, check=True).stdout for _ in range(2)]
        assert runs[0] == runs[1] and len(runs[0].strip()) == 64


class TestBackward:
    def test_requires_forward(self):
        with pytest.raises(StateError):
            build_model().backward(np.eye(3)[:1], LossConfig())

    def test_perfect_prediction_head_bias_stationary(self, rng):
        m = build_model(ModelConfig(dropout=0.0), seed=2)
        params = m.param_dict()
        params["head.w"][...] = 0.0
        params["head.b"][...] = [0.0, 800.0, 0.0]
        x = rng.normal(size=(3, 9, 5))
        probs = m.forward(x)
        assert np.array_equal(probs, np.tile([0.0, 1.0, 0.0], (3, 1)))
        grads = m.backward(np.tile([0.0, 1.0, 0.0], (3, 1)), LossConfig(l2_lambda=0.0))
        assert np.all(np.abs(grads["head.b"]) < 1e-9)

    def test_single_dense_layer_gradient(self, rng):
        layer = Dense("d", 4, 3, rng)
        soft = Softmax("s")
        x = rng.normal(size=(5, 4))
        y = np.eye(3)[rng.integers(0, 3, 5)]
        cfg = LossConfig(l2_lambda=0.0)

        def cost():
            return weighted_cost(soft.forward(layer.forward(x)), y, None, cfg)

        from crdnn.loss import data_cost_grad

        layer.zero_grads()
        probs = soft.forward(layer.forward(x))
        layer.backward(soft.backward(data_cost_grad(probs, y, cfg.class_weights)))
        rows = probe_gradients(cost, layer.params, layer.grads, 15, rng)
        assert max(r[4] for r in rows) < 1e-6

    @pytest.mark.parametrize("arch", ["1lstm", "2lstm", "2bilstm"])
    def test_full_model_gradient(self, arch, rng):
        m = build_model(ModelConfig(arch=arch, dropout=0.0), seed=4)
        x = rng.normal(size=(4, 9, 5))
        y = np.eye(3)[[0, 1, 2, 1]]
        cfg = LossConfig(l2_lambda=0.05)
        _, grads = m.loss_and_grads(x, y, cfg)
        rows = probe_gradients(lambda: weighted_cost(m.forward(x), y, m, cfg), m.param_dict(), grads, 40, rng)
        assert max(r[4] for r in rows) < 1e-4

    def test_dropout_gradient_with_fixed_mask(self, rng):
        m = build_model(ModelConfig(arch="2lstm", dropout=0.3), seed=5)
        x = rng.normal(size=(3, 9, 5))
        y = np.eye(3)[[2, 0, 1]]
        cfg = LossConfig()
        _, grads = m.loss_and_grads(x, y, cfg, training=True, rng=np.random.default_rng(9))

        def cost():
            return weighted_cost(m.forward(x, training=True, rng=np.random.default_rng(9)), y, m, cfg)

        rows = probe_gradients(cost, m.param_dict(), grads, 30, rng)
        assert max(r[4] for r in rows) < 1e-4

    def test_all_dense_regularization_gradient(self, rng):
        m = build_model(ModelConfig(arch="1lstm", dropout=0.0), seed=6)
        x = rng.normal(size=(2, 9, 5))
        y = np.eye(3)[[1, 2]]
        cfg = LossConfig(l2_lambda=0.5, regularized_layers="all_dense")
        _, grads = m.loss_and_grads(x, y, cfg)
        params = {k: v for k, v in m.param_dict().items() if k.endswith(".w")}
        rows = probe_gradients(lambda: weighted_cost(m.forward(x), y, m, cfg), params, grads, 20, rng)
        assert max(r[4] for r in rows) < 1e-4


class TestParameterCount:
    def test_layer_formulas(self):
        assert layer_param_count({"kind": "DenseHead", "n_in": 32, "n_out": 32}) == 1056
        assert layer_param_count({"kind": "Lstm", "n_input": 32, "hidden": 32}) == 8320
        assert layer_param_count({"kind": "Conv1D", "channels": 5, "kernel": 5, "filters": 10}) == 260
        assert layer_param_count({"kind": "BiLstm", "n_input": 32, "hidden": 32}) == 16640

    @pytest.mark.parametrize("arch,expected", [("1lstm", 12199), ("2lstm", 20519), ("2bilstm", 46375)])
    def test_default_stacks(self, arch, expected):
        # 260 conv + 352 + 1056 reduce + recurrent + dense (in*32+32) + 1056 + 99 head
        m = build_model(ModelConfig(arch=arch))
        assert count_parameters(m) == expected
        assert sum(p.size for _, p in m.named_params()) == expected

    def test_count_equals_scalars_moved_by_one_step(self, rng):
        from crdnn.training import SGD

        m = build_model(ModelConfig(arch="2lstm", dropout=0.0), seed=8)
        # non-negative dense weights and positive biases keep every ReLU unit
        # alive, so each scalar receives a nonzero gradient
        for name, p in m.named_params():
            if name.startswith(("reduce", "dense", "conv")):
                p[...] = np.abs(p) if name.endswith(".w") else 0.5
        x = rng.normal(size=(256, 9, 5)) * 2.0
        y = np.eye(3)[rng.integers(0, 3, 256)]
        before = m.get_state()
        _, grads = m.loss_and_grads(x, y, LossConfig(l2_lambda=0.0))
        SGD(m.param_dict()).step(grads, 1e-2)
        moved = sum(int(np.count_nonzero(v != before[k])) for k, v in m.named_params())
        assert moved == count_parameters(m)
