import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lshmoe.core import RngState
from lshmoe.moe import (Activation, Expert, GateConfig, MoeLayer, expert_forward, gate_topk,
                        identity_expert, moe_forward_dense, random_layer, route, with_experts)

from oracles import expert_slow, moe_slow, topk_slow


def scaled_expert(dim, scale):
    eye = np.eye(dim)
    return Expert(eye, np.zeros(dim), scale * eye, np.zeros(dim), Activation.IDENTITY)


def test_gate_topk_identity_weights():
    gate = GateConfig(np.eye(3), 2)
    # experts 1 and 3 in 1-based numbering
    assert gate_topk(gate, [0.9, 0.1, 0.5]) == [0, 2]


def test_gate_topk_all_experts():
    gate = GateConfig(RngState(0).generator().standard_normal((5, 4)), 5)
    assert gate_topk(gate, np.ones(4)) == [0, 1, 2, 3, 4]


def test_gate_topk_tie_break():
    assert gate_topk(GateConfig(np.eye(3), 1), [0.4, 0.4, 0.4]) == [0]
    assert gate_topk(GateConfig(np.eye(4), 2), [0.1, 0.7, 0.7, 0.7]) == [1, 2]


def test_gate_k_out_of_range():
    with pytest.raises(ValueError):
        GateConfig(np.eye(3), 4)
    with pytest.raises(ValueError):
        GateConfig(np.eye(3), 0)


@settings(max_examples=100)
@given(n=st.integers(1, 16), d=st.integers(1, 8), seed=st.integers(0, 10**6), data=st.data())
def test_gate_topk_returns_k_distinct_sorted(n, d, seed, data):
    k = data.draw(st.integers(1, n))
    gen = RngState(seed).generator()
    gate = GateConfig(gen.standard_normal((n, d)), k)
    x = gen.standard_normal(d)
    idx = gate_topk(gate, x)
    assert len(idx) == k == len(set(idx))
    assert idx == sorted(idx) and all(0 <= i < n for i in idx)
    assert idx == topk_slow(gate.weights, x, k)


@settings(max_examples=100)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.01, 100), k=st.integers(1, 4))
def test_gate_positive_scale_invariance(seed, alpha, k):
    gen = RngState(seed).generator()
    gate = GateConfig(gen.standard_normal((6, 5)), k)
    x = gen.standard_normal(5)
    scores = np.sort(gate.weights @ x)[::-1]
    # only meaningful when the top-k set is unique with some margin
    assume(k == 6 or scores[k - 1] - scores[k] > 1e-9 * np.max(np.abs(scores)))
    assert gate_topk(gate, alpha * x) == gate_topk(gate, x)


def test_expert_identity_relu():
    x = np.array([0.0, 1.5, 2.0, 0.25])
    e = Expert(np.eye(4), np.zeros(4), np.eye(4), np.zeros(4), Activation.RELU)
    assert np.array_equal(expert_forward(e, x), x)


def test_expert_zero_input():
    e = random_layer(1, 1, 6, 12, seed=0).experts[0]
    e = Expert(e.w1, np.zeros(12), e.w2, np.zeros(6), Activation.GELU)
    assert np.array_equal(expert_forward(e, np.zeros(6)), np.zeros(6))


@pytest.mark.parametrize("act", list(Activation))
def test_expert_matches_scalar_loop(act):
    layer = random_layer(1, 1, 8, 16, seed=3, activation=act)
    e = layer.experts[0]
    x = RngState(4).generator().standard_normal(8)
    assert np.max(np.abs(expert_forward(e, x) - expert_slow(e, x))) <= 1e-12


def test_expert_dimension_mismatch():
    e = identity_expert(4)
    with pytest.raises(ValueError):
        expert_forward(e, np.ones(3))
    with pytest.raises(ValueError):
        Expert(np.eye(4), np.zeros(3), np.eye(4), np.zeros(4))


def test_expert_non_square_allowed():
    e = Expert(np.ones((5, 4)), np.zeros(5), np.ones((3, 5)), np.zeros(3))
    assert expert_forward(e, np.ones(4)).shape == (3,)
    assert e.d_out == 3 and e.d_in == 4


def test_layer_shape_checks():
    gate = GateConfig(np.eye(2), 1)
    with pytest.raises(ValueError):
        MoeLayer(gate, (identity_expert(2),))
    with pytest.raises(ValueError):
        MoeLayer(gate, (identity_expert(3), identity_expert(3)))


def test_dense_single_identity_expert():
    layer = MoeLayer(GateConfig(np.ones((1, 3)), 1), (identity_expert(3),))
    xs = RngState(1).generator().standard_normal((5, 3))
    assert np.array_equal(moe_forward_dense(layer, xs), xs)


def test_dense_unweighted_sum():
    layer = MoeLayer(GateConfig(np.eye(2), 2), (scaled_expert(2, 2.0), scaled_expert(2, -1.0)))
    xs = np.array([[0.3, -1.0], [2.0, 0.5]])
    assert np.allclose(moe_forward_dense(layer, xs), xs, rtol=0, atol=1e-15)


@pytest.mark.parametrize("act", [Activation.RELU, Activation.GELU])
def test_dense_matches_token_loop(act):
    layer = random_layer(4, 2, 8, 16, seed=5, activation=act)
    xs = RngState(6).generator().standard_normal((16, 8))
    assert np.max(np.abs(moe_forward_dense(layer, xs) - moe_slow(layer, xs))) <= 1e-12


def test_dense_rejects_empty():
    layer = random_layer(2, 1, 3, 4, seed=0)
    with pytest.raises(ValueError):
        moe_forward_dense(layer, np.empty((0, 3)))


@settings(max_examples=30)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 20), row=st.integers(0, 19))
def test_dense_token_independence(seed, n, row):
    row = row % n
    layer = random_layer(4, 2, 5, 8, seed=seed)
    gen = RngState(seed, 9).generator()
    xs = gen.standard_normal((n, 5))
    ys = xs.copy()
    other = [i for i in range(n) if i != row]
    ys[other] = gen.standard_normal((n - 1, 5))
    assert np.allclose(moe_forward_dense(layer, xs)[row], moe_forward_dense(layer, ys)[row],
                       rtol=0, atol=1e-13)


@settings(max_examples=50)
@given(seed=st.integers(0, 10**6), alpha=st.floats(0.1, 10))
def test_linear_experts_homogeneous(seed, alpha):
    base = random_layer(4, 2, 6, 6, seed=seed, activation=Activation.IDENTITY)
    linear = [Expert(e.w1, np.zeros_like(e.b1), e.w2, np.zeros_like(e.b2), Activation.IDENTITY)
              for e in base.experts]
    layer = with_experts(base, linear)
    xs = RngState(seed, 1).generator().standard_normal((8, 6))
    assume(np.array_equal(route(layer.gate, xs), route(layer.gate, alpha * xs)))
    assert np.allclose(moe_forward_dense(layer, alpha * xs), alpha * moe_forward_dense(layer, xs),
                       rtol=1e-12, atol=1e-12)


def test_random_layer_deterministic():
    a = random_layer(4, 2, 8, 16, seed=11)
    b = random_layer(4, 2, 8, 16, seed=11)
    assert a.gate.weights.tobytes() == b.gate.weights.tobytes()
    assert all(x.w1.tobytes() == y.w1.tobytes() for x, y in zip(a.experts, b.experts))
