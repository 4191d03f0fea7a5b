import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from crdnn.errors import ConfigError, NumericError
from crdnn.loss import LossConfig, data_cost_grad, default_class_weights, l2_penalty, weighted_cost
from crdnn.nn import ModelConfig, build_model

NO_L2 = LossConfig(l2_lambda=0.0)


def test_default_weights():
    assert default_class_weights().tolist() == [1.0, 4.0, 7.0]


def test_uniform_prediction_value():
    # 1*ln(1.5) + 4*ln(3) + 7*ln(1.5), evaluated with math.log
    expected = 7.638170019537755
    assert math.log(1.5) * 8 + 4 * math.log(3) == pytest.approx(expected, abs=1e-15)
    got = weighted_cost(np.full((1, 3), 1 / 3), np.array([[0, 1, 0]]), None, NO_L2)
    assert got == pytest.approx(expected, rel=1e-12)


def test_perfect_prediction_is_tiny():
    y = np.eye(3)
    assert weighted_cost(y, y, None, NO_L2) < 1e-9


def test_single_sample_and_batch_agree():
    h = np.array([0.2, 0.5, 0.3])
    y = np.array([0, 0, 1.0])
    assert weighted_cost(h, y, None, NO_L2) == weighted_cost(h[None], y[None], None, NO_L2)


def test_clamped_certain_mistake_is_finite():
    c = weighted_cost(np.array([[1.0, 0.0, 0.0]]), np.array([[0, 0, 1.0]]), None, NO_L2)
    # travel clamps to 1 - 1e-12 (not exact in binary), unloading to 1e-12
    assert math.isfinite(c)
    expected = -math.log(1.0 - (1.0 - 1e-12)) - 4 * math.log(1.0 - 1e-12) - 7 * math.log(1e-12)
    assert c == pytest.approx(expected, rel=1e-12)


def test_nan_prediction_raises_with_index():
    h = np.full((3, 3), 1 / 3)
    h[2, 1] = np.nan
    with pytest.raises(NumericError, match="sample 2"):
        weighted_cost(h, np.eye(3), None, NO_L2)


@pytest.mark.parametrize("bad", [[1, 0, 7], [1, -4, 7], [[1, 4, 7]]])
def test_bad_weights(bad):
    with pytest.raises(ConfigError):
        LossConfig(class_weights=bad)


def test_negative_lambda():
    with pytest.raises(ConfigError):
        LossConfig(l2_lambda=-1.0)


def test_unknown_regularization_mode():
    with pytest.raises(ConfigError):
        LossConfig(regularized_layers="conv")


def test_l2_only_touches_head_matrices():
    m = build_model(ModelConfig(arch="1lstm"), seed=0)
    h, y = np.full((4, 3), 1 / 3), np.eye(3)[[0, 1, 2, 0]]
    cfg = LossConfig(l2_lambda=2.0)
    base = weighted_cost(h, y, m, cfg)
    params = m.param_dict()
    params["conv.w"] *= 3.0
    params["reduce1.w"] *= 3.0
    assert weighted_cost(h, y, m, cfg) == base
    params["head.w"] *= 3.0
    assert weighted_cost(h, y, m, cfg) > base


def test_regularized_weight_shapes():
    m = build_model(ModelConfig(arch="2lstm"))
    assert [w.shape for w in m.regularized_weights("head")] == [(32, 32), (3, 32)]
    assert len(m.regularized_weights("all_dense")) == 5


def test_l2_penalty_formula():
    w = [np.full((2, 2), 2.0), np.ones(3)]
    assert l2_penalty(w, 0.5, 4) == pytest.approx(0.5 / 8 * 19)


@given(
    h=hnp.arrays(np.float64, (6, 3), elements=st.floats(0.0, 1.0)),
    labels=hnp.arrays(np.int64, 6, elements=st.integers(0, 2)),
)
def test_cost_non_negative(h, labels):
    assert weighted_cost(h, np.eye(3)[labels], None, NO_L2) >= 0.0


@given(
    labels=hnp.arrays(np.int64, 5, elements=st.integers(0, 2)),
    a=st.floats(0.0, 1.0),
    b=st.floats(0.0, 1.0),
)
def test_cost_falls_as_true_class_probability_rises(labels, a, b):
    lo, hi = sorted((a, b))
    y = np.eye(3)[labels]

    def at(p):
        return weighted_cost(y * p + (1 - y) * (1 - p) / 2, y, None, NO_L2)

    assert at(hi) <= at(lo) + 1e-12


def test_grad_matches_finite_difference(rng):
    h = rng.uniform(0.05, 0.95, size=(4, 3))
    y = np.eye(3)[[0, 2, 1, 1]]
    g = data_cost_grad(h, y, NO_L2.class_weights)
    eps = 1e-6
    for i in range(4):
        for j in range(3):
            hp, hm = h.copy(), h.copy()
            hp[i, j] += eps
            hm[i, j] -= eps
            num = (weighted_cost(hp, y, None, NO_L2) - weighted_cost(hm, y, None, NO_L2)) / (2 * eps)
            assert g[i, j] == pytest.approx(num, rel=1e-6)
