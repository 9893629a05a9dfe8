"""Finite-difference verification of every trainable layer and loss."""

from __future__ import annotations

import numpy as np

from .deepturbo import ModelConfig, SisoNet
from .nn import (BiGRU, Conv1dSame, GRU, Linear, Sequential, bce_grad, bce_loss, grad_check, max_bce_grad,
                 max_bce_loss, sigmoid)

STEP = 1e-4
TOL = 1e-4


def _layer_check(layer, x, rng, n_samples):
    y, cache = layer.forward(x)
    weights = rng.normal(size=y.shape)
    layer.zero_grad()
    dx = layer.backward(weights, cache)
    params = dict(layer.params)
    grads = dict(layer.grads)
    params["input"], grads["input"] = x, dx
    return grad_check(lambda: float(np.sum(layer.forward(x)[0] * weights)), params, grads,
                      step=STEP, n_samples=n_samples, rng=rng)


def _head_bce_check(rng, loss, grad, n_samples):
    head = Linear(4, 1, rng)
    x = rng.normal(size=(3, 6, 4))
    target = rng.integers(0, 2, size=(3, 6)).astype(float)

    def f():
        return loss(sigmoid(head.forward(x)[0][..., 0]), target)

    logits, cache = head.forward(x)
    p = sigmoid(logits[..., 0])
    head.zero_grad()
    dx = head.backward((grad(p, target) * p * (1 - p))[..., None], cache)
    params = dict(head.params)
    grads = dict(head.grads)
    params["input"], grads["input"] = x, dx
    return grad_check(f, params, grads, step=STEP, n_samples=n_samples, rng=rng)


def _pred_check(rng, loss, grad):
    p = rng.uniform(0.05, 0.95, size=(2, 7))
    target = rng.integers(0, 2, size=p.shape).astype(float)
    return grad_check(lambda: loss(p, target), {"pred": p}, {"pred": grad(p, target)},
                      step=STEP, n_samples=None, rng=rng)


def _siso_check(rng, variant, n_samples):
    cfg = ModelConfig.preset(variant, iterations=1, posterior_width=3, hidden=4, num_layers=2,
                             block_length=6)
    net = SisoNet(cfg, rng)
    ys, yp = rng.normal(size=(2, 6)), rng.normal(size=(2, 6))
    prior = rng.normal(size=(2, 6, 3))
    out, cache = net.forward(ys, yp, prior)
    weights = rng.normal(size=out.shape)
    net.zero_grad()
    dys, dyp, dprior = net.backward(weights, cache)
    params = dict(net.params)
    grads = dict(net.grads)
    params.update({"y_sys": ys, "y_par": yp, "prior": prior})
    grads.update({"y_sys": dys, "y_par": dyp, "prior": dprior})
    return grad_check(lambda: float(np.sum(net.forward(ys, yp, prior)[0] * weights)), params, grads,
                      step=STEP, n_samples=n_samples, rng=rng)


def run_gradient_suite(seed: int = 0, n_samples: int | None = 12) -> list[tuple[str, float]]:
    """``(check name, max relative error)`` for each component; float64, step 1e-4."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 5, 3))
    return [
        ("gru", _layer_check(GRU(3, 4, rng), x, rng, n_samples)),
        ("bigru", _layer_check(BiGRU(3, 4, rng), x, rng, n_samples)),
        ("bigru_2layer", _layer_check(Sequential(BiGRU(3, 4, rng), BiGRU(8, 4, rng)), x, rng, n_samples)),
        ("conv1d_same_k5", _layer_check(Conv1dSame(3, 4, 5, rng), rng.normal(size=(2, 7, 3)), rng, n_samples)),
        ("decode_head_bce", _head_bce_check(rng, bce_loss, bce_grad, n_samples)),
        ("bce", _pred_check(rng, bce_loss, bce_grad)),
        ("max_bce", _pred_check(rng, max_bce_loss, max_bce_grad)),
        ("siso_bigru", _siso_check(rng, "deepturbo", n_samples)),
        ("siso_cnn", _siso_check(rng, "deepturbo_cnn", n_samples)),
    ]
