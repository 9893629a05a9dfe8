import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbokit.nn import (BCE_EPS, GRU, Adam, BiGRU, Conv1dSame, Linear, Sequential, Tanh, bce_grad, bce_loss,
                         grad_check, max_bce_grad, max_bce_loss, sigmoid)


def _sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def gru_reference(layer, x):
    """Scalar loop over the GRU equations, one sequence at a time."""
    p = layer.params
    B, L, _ = x.shape
    H = layer.hidden
    out = np.zeros((B, L, H))
    for b in range(B):
        h = np.zeros(H)
        for t in range(L):
            xt = x[b, t]
            r = np.array([_sig(v) for v in xt @ p["W_r"] + h @ p["U_r"] + p["b_r"]])
            z = np.array([_sig(v) for v in xt @ p["W_z"] + h @ p["U_z"] + p["b_z"]])
            n = np.tanh(xt @ p["W_h"] + (r * h) @ p["U_h"] + p["b_h"])
            h = (1 - z) * h + z * n
            out[b, t] = h
    return out


def test_sigmoid_values():
    x = np.array([-800.0, -3.0, 0.0, 2.5, 800.0])
    assert np.allclose(sigmoid(x), [0.0, _sig(-3.0), 0.5, _sig(2.5), 1.0], atol=1e-15)
    assert np.all(np.isfinite(sigmoid(x)))


def test_gru_matches_reference(rng):
    layer = GRU(3, 4, rng)
    x = rng.normal(size=(2, 6, 3))
    assert np.allclose(layer.forward(x)[0], gru_reference(layer, x), atol=1e-12)


def test_bigru_backward_direction_is_reversed_gru(rng):
    layer = BiGRU(2, 3, rng)
    x = rng.normal(size=(2, 5, 2))
    out = layer.forward(x)[0]
    assert out.shape == (2, 5, 6)
    assert np.allclose(out[..., :3], gru_reference(layer.fwd, x))
    assert np.allclose(out[..., 3:], gru_reference(layer.bwd, x[:, ::-1])[:, ::-1])
    assert set(layer.params) == {f"{d}.{g}_{k}" for d in ("fwd", "bwd") for g in "WUb" for k in "rzh"}


def test_conv_matches_explicit_sum(rng):
    layer = Conv1dSame(2, 3, 5, rng)
    x = rng.normal(size=(2, 7, 2))
    W, b = layer.params["W"], layer.params["b"]
    want = np.zeros((2, 7, 3))
    for bi in range(2):
        for t in range(7):
            for o in range(3):
                acc = b[o]
                for j in range(5):
                    s = t + j - 2
                    if 0 <= s < 7:
                        acc += W[o, :, j] @ x[bi, s]
                want[bi, t, o] = acc
    assert np.allclose(layer.forward(x)[0], want, atol=1e-12)
    with pytest.raises(ValueError):
        Conv1dSame(2, 3, 4)


def test_linear_and_tanh_shapes(rng):
    seq = Sequential(Linear(3, 4, rng), Tanh(), Linear(4, 2, rng))
    y, caches = seq.forward(rng.normal(size=(5, 6, 3)))
    assert y.shape == (5, 6, 2) and len(caches) == 3
    assert set(seq.params) == {"0.W", "0.b", "2.W", "2.b"}
    with pytest.raises(ValueError):
        Linear(3, 1).forward(np.zeros((2, 4)))


def test_gradients_accumulate(rng):
    # a layer used twice must receive the sum of both contributions
    layer = Linear(3, 2, rng)
    x = rng.normal(size=(4, 3))
    dy = rng.normal(size=(4, 2))
    layer.zero_grad()
    layer.backward(dy, x)
    once = layer.grads["W"].copy()
    layer.backward(dy, x)
    assert np.allclose(layer.grads["W"], 2 * once)
    layer.zero_grad()
    assert not layer.grads["W"].any()


def test_bce_values():
    p = np.array([0.9, 0.2])
    y = np.array([1.0, 0.0])
    assert bce_loss(p, y) == pytest.approx(-(math.log(0.9) + math.log(0.8)) / 2)
    assert bce_loss(np.array([0.0]), np.array([1.0])) == pytest.approx(-math.log(BCE_EPS))
    assert bce_grad(np.array([0.0, 1.0]), np.array([1.0, 0.0])).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        bce_loss(np.zeros(2), np.zeros(3))


def test_max_bce_picks_worst_position():
    p = np.array([[0.9, 0.6, 0.99], [0.5, 0.5, 0.5]])
    y = np.ones_like(p)
    assert max_bce_loss(p, y) == pytest.approx((-math.log(0.6) - math.log(0.5)) / 2)
    g = max_bce_grad(p, y)
    assert np.count_nonzero(g[0]) == 1 and g[0, 1] != 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_loss_gradients_numeric(seed):
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.05, 0.95, size=(3, 5))
    y = rng.integers(0, 2, size=p.shape).astype(float)
    for loss, grad in ((bce_loss, bce_grad), (max_bce_loss, max_bce_grad)):
        assert grad_check(lambda: loss(p, y), {"p": p}, {"p": grad(p, y)}, n_samples=None) < 1e-4


def test_grad_check_flags_wrong_gradient(rng):
    w = rng.normal(size=4)
    assert grad_check(lambda: float(np.sum(w ** 2)), {"w": w}, {"w": 2 * w}) < 1e-6
    assert grad_check(lambda: float(np.sum(w ** 2)), {"w": w}, {"w": 3 * w}) > 0.1


def test_adam_first_step_and_convergence():
    p = np.array([1.0, -2.0])
    g = np.zeros(2)
    opt = Adam([("p", p, g)], lr=0.1)
    g[:] = [0.5, -4.0]
    opt.step()
    # first bias-corrected step is lr * g / (|g| + eps)
    assert np.allclose(p, [0.9, -1.9], atol=1e-7)
    for _ in range(500):
        g[:] = 2 * p
        opt.step()
    assert np.max(np.abs(p)) < 1e-2


def test_adam_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        Adam([("p", np.zeros(2), np.zeros(3))]).step()


@pytest.mark.parametrize("make", [lambda r: GRU(2, 3, r), lambda r: BiGRU(2, 3, r),
                                  lambda r: Conv1dSame(2, 3, 3, r)])
def test_layer_gradients(make, rng):
    layer = make(rng)
    x = rng.normal(size=(2, 4, 2))
    w = rng.normal(size=layer.forward(x)[0].shape)
    layer.zero_grad()
    dx = layer.backward(w, layer.forward(x)[1])
    params = {**layer.params, "x": x}
    grads = {**layer.grads, "x": dx}
    assert grad_check(lambda: float(np.sum(layer.forward(x)[0] * w)), params, grads, n_samples=None) < 1e-5
