import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from molxfer.gradcheck import numeric_grad, rel_error
from molxfer.nn import (
    Adam,
    CheckpointError,
    NonScalarLoss,
    ParamSet,
    ShapeMismatch,
    Value,
    add_mlp,
    backward,
    decayed_lr,
    init_glorot,
    load_checkpoint,
    mlp,
    save_checkpoint,
)
from molxfer.nn import autodiff as ad

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def leaf(a):
    return Value(np.array(a, dtype=float), requires_grad=True)


def grad_of(fn, *arrays):
    leaves = [leaf(a) for a in arrays]
    backward(fn(*leaves))
    return [x.grad for x in leaves], leaves


def fd_check(fn, *arrays, tol=1e-6):
    grads, leaves = grad_of(fn, *arrays)
    for g, x in zip(grads, leaves):
        num = numeric_grad(lambda: float(fn(*leaves).data), x)
        assert rel_error(g, num) < tol


# -- forward values ------------------------------------------------------------------


def test_dense_matches_dense_algebra(rng):
    x, W, b = rng.normal(size=(4, 3)), rng.normal(size=(2, 3)), rng.normal(size=2)
    np.testing.assert_allclose(ad.dense(x, W, b).data, x @ W.T + b, rtol=0, atol=1e-14)
    np.testing.assert_allclose(ad.dense(x[0], W).data, W @ x[0], rtol=0, atol=1e-14)


def test_sigmoid_is_stable_at_extremes():
    out = ad.sigmoid(np.array([-1000.0, 0.0, 1000.0])).data
    assert out[0] == 0.0 and out[1] == 0.5 and out[2] == 1.0


def test_softplus_large_inputs():
    out = ad.softplus(np.array([-800.0, 0.0, 800.0])).data
    assert out[0] == 0.0
    assert out[1] == pytest.approx(math.log(2), abs=1e-15)
    assert out[2] == 800.0


def test_log_clamp_has_zero_gradient_outside():
    x = leaf([0.0, 0.5, 1.0])
    backward(ad.sum(ad.log(x, 1e-7)))
    assert x.grad[0] == 0.0 and x.grad[2] == 0.0
    assert x.grad[1] == pytest.approx(2.0)


def test_segment_softmax_sums_to_one_per_segment(rng):
    x = rng.normal(size=(7, 1))
    seg = np.array([0, 0, 0, 1, 2, 2, 2])
    w = ad.segment_softmax(x, seg, 3).data.ravel()
    sums = np.bincount(seg, weights=w)
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)
    assert w[3] == 1.0


def test_scatter_gather_roundtrip(rng):
    x = rng.normal(size=(5, 2))
    idx = np.array([2, 0, 2, 1, 0])
    s = ad.scatter_add(x, idx, 3).data
    np.testing.assert_allclose(s[2], x[0] + x[2])
    np.testing.assert_array_equal(ad.gather(x, [4, 4, 1]).data, x[[4, 4, 1]])


def test_grad_reverse_is_identity_forward_and_negates_backward(rng):
    a = rng.normal(size=(3, 2))
    x1, x2 = leaf(a), leaf(a)
    c = rng.normal(size=(3, 2))
    backward(ad.sum(ad.mul(ad.grad_reverse(x1), c)))
    backward(ad.sum(ad.mul(ad.grad_reverse(x2, 1.0), c)))
    np.testing.assert_array_equal(ad.grad_reverse(a).data, a)
    np.testing.assert_array_equal(x1.grad, -x2.grad)


def test_detach_stops_gradient():
    x = leaf([1.0, 2.0])
    backward(ad.sum(ad.add(ad.mul(x, x), ad.detach(ad.mul(x, 3.0)))))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


# -- gradients vs finite differences -----------------------------------------------------


@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (2, 4), elements=finite))
def test_dense_grad_property(x, W):
    fd_check(lambda a, b: ad.sum(ad.mul(ad.dense(a, b), ad.dense(a, b))), x, W)


@given(arrays(np.float64, (6,), elements=finite))
def test_softplus_and_sigmoid_grad_property(x):
    fd_check(lambda a: ad.sum(ad.add(ad.softplus(a), ad.mul(ad.sigmoid(a), ad.exp(ad.mul(a, 0.3))))), x)


@given(arrays(np.float64, (5, 1), elements=finite))
def test_segment_softmax_grad_property(x):
    seg = np.array([0, 1, 1, 0, 2])
    c = np.arange(5.0)[:, None]
    fd_check(lambda a: ad.sum(ad.mul(ad.segment_softmax(a, seg, 3), c)), x)


def test_structural_op_grads(rng):
    x = rng.normal(size=(4, 3))
    y = rng.normal(size=(4, 2))
    idx = np.array([0, 2, 2, 1])
    fd_check(lambda a, b: ad.sum(ad.mul(ad.concat(a, b, axis=1), ad.concat(a, b, axis=1))), x, y)
    fd_check(lambda a: ad.sum(ad.mul(ad.scatter_add(a, idx, 3), ad.scatter_add(a, idx, 3))), x)
    fd_check(lambda a: ad.mean(ad.mul(ad.gather(a, [3, 3, 0]), 2.5)), x)
    fd_check(lambda a: ad.sum(ad.matmul(a, ad.sum(a, axis=0))), x)
    fd_check(lambda a: ad.sum(ad.log(ad.add(ad.mul(a, a), 1.0))), x)


def test_broadcast_grads(rng):
    x, b = rng.normal(size=(4, 3)), rng.normal(size=3)
    fd_check(lambda a, c: ad.sum(ad.mul(ad.sub(a, c), ad.add(a, c))), x, b)


def test_shared_subexpression_accumulates():
    x = leaf([3.0])
    y = ad.mul(x, x)
    backward(ad.sum(ad.add(y, y)))
    assert x.grad[0] == 12.0


# -- errors ------------------------------------------------------------------------------


def test_nonscalar_loss_raises():
    with pytest.raises(NonScalarLoss):
        backward(leaf([1.0, 2.0]))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        ad.add(np.zeros((2, 3)), np.zeros((3, 2)))
    with pytest.raises(ShapeMismatch):
        ad.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        ad.dense(np.zeros(4), np.zeros((2, 3)))
    with pytest.raises(ShapeMismatch):
        Value(np.zeros((2, 2, 2)))


# -- params, mlp, optimiser ----------------------------------------------------------------


def test_glorot_bounds_and_determinism():
    W = init_glorot((30, 20), 5)
    assert np.abs(W).max() <= math.sqrt(6 / 50)
    np.testing.assert_array_equal(W, init_glorot((30, 20), 5))
    np.testing.assert_array_equal(init_glorot((4,), 0), np.zeros(4))


def test_paramset_duplicate_and_state_roundtrip(rng):
    ps = ParamSet()
    ps.add("a", np.ones(2))
    with pytest.raises(KeyError):
        ps.add("a", np.zeros(2))
    snap = ps.state()
    ps["a"].data = ps["a"].data + 1
    ps.load_state(snap)
    np.testing.assert_array_equal(ps["a"].data, np.ones(2))
    with pytest.raises(KeyError):
        ps.load_state({"b": np.ones(2)})


def test_mlp_zero_weights_gives_half():
    ps = ParamSet()
    add_mlp(ps, "S", 3, 4, 1, 0)
    for v in ps.values():
        v.data = np.zeros_like(v.data)
    assert mlp(np.ones(3), ps, "S").data[0] == 0.5


def test_mlp_frozen_gives_no_weight_grads(rng):
    ps = ParamSet()
    add_mlp(ps, "S", 3, 4, 1, rng)
    x = leaf(rng.normal(size=(2, 3)))
    backward(ad.sum(mlp(x, ps, "S", frozen=True)))
    assert all(not v.grad.any() for v in ps.values())
    assert x.grad.any()


def test_adam_first_step_matches_hand_computation():
    ps = ParamSet()
    ps.add("w", np.array([1.0, -2.0]))
    ps["w"].grad = np.array([0.5, -4.0])
    opt = Adam(ps, lr=0.1)
    opt.step()
    # first bias-corrected step is lr * g / (|g| + eps)
    expected = np.array([1.0, -2.0]) - 0.1 * np.array([0.5, -4.0]) / (np.abs([0.5, -4.0]) + 1e-8)
    np.testing.assert_allclose(ps["w"].data, expected, rtol=0, atol=1e-15)


def test_adam_two_steps_oracle():
    ps = ParamSet()
    ps.add("w", np.array([0.3]))
    opt = Adam(ps, lr=0.01)
    m = v = 0.0
    w = 0.3
    for t, g in enumerate([0.2, -0.7], start=1):
        ps["w"].grad = np.array([g])
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.01 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert ps["w"].data[0] == pytest.approx(w, abs=1e-15)


def test_adam_minimises_quadratic():
    ps = ParamSet()
    ps.add("w", np.array([3.0, -2.0]))
    opt = Adam(ps, lr=0.1)
    for _ in range(500):
        ps.zero_grad()
        backward(ad.sum(ad.mul(ps["w"], ps["w"])))
        opt.step()
    assert np.abs(ps["w"].data).max() < 1e-2


def test_decayed_lr_endpoints():
    assert decayed_lr(0, 40) == 1e-3
    assert decayed_lr(39, 40) == pytest.approx(1e-4, rel=1e-12)
    ratios = [decayed_lr(e + 1, 40) / decayed_lr(e, 40) for e in range(39)]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


# -- checkpoints -----------------------------------------------------------------------------


def test_checkpoint_roundtrip_and_bytes(tmp_path, rng):
    arrays = {"b": rng.normal(size=3), "a": rng.normal(size=(2, 2)), "s": np.array(1.5)}
    save_checkpoint(tmp_path / "x.ckpt", arrays, {"kind": "t", "z": 1, "a": [1, 2]})
    save_checkpoint(tmp_path / "y.ckpt", arrays, {"a": [1, 2], "z": 1, "kind": "t"})
    assert (tmp_path / "x.ckpt").read_bytes() == (tmp_path / "y.ckpt").read_bytes()
    header, back = load_checkpoint(tmp_path / "x.ckpt")
    assert header == {"kind": "t", "z": 1, "a": [1, 2]}
    for k, v in arrays.items():
        np.testing.assert_array_equal(back[k], v)


def test_checkpoint_rejects_garbage(tmp_path, rng):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"hello world")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    good = tmp_path / "g.ckpt"
    save_checkpoint(good, {"w": rng.normal(size=10)}, {})
    bad.write_bytes(good.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
