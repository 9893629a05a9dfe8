"""Small numpy neural-network toolkit with hand-written backward passes.

Layers hold parameters in ``params`` and matching gradient buffers in
``grads``. ``forward`` returns ``(output, cache)`` and ``backward(dout, cache)``
returns the input gradient while *adding* into ``grads``, so one layer may be
applied several times per step (shared weights) with gradients summed.

Sequence tensors are ``(batch, length, features)``.
"""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

BCE_EPS = 1e-7


def sigmoid(x):
    # tanh form: overflow-free and faster than scipy's expit here
    return 0.5 * np.tanh(0.5 * x) + 0.5


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Layer:
    params: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]

    def _init_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray, np.ndarray]]:
        for k in self.params:
            yield prefix + k, self.params[k], self.grads[k]


class Linear(Layer):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        bound = 1.0 / np.sqrt(n_in)
        self.n_in, self.n_out = n_in, n_out
        self.params = {"W": _uniform(rng, (n_in, n_out), bound), "b": _uniform(rng, (n_out,), bound)}
        self._init_grads()

    def forward(self, x):
        if x.shape[-1] != self.n_in:
            raise ValueError(f"Linear expects {self.n_in} input features, got {x.shape[-1]}")
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dy, x):
        self.grads["W"] += x.reshape(-1, self.n_in).T @ dy.reshape(-1, self.n_out)
        self.grads["b"] += dy.reshape(-1, self.n_out).sum(axis=0)
        return dy @ self.params["W"].T


class Tanh(Layer):
    def __init__(self):
        self.params, self.grads = {}, {}

    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, dy, y):
        return dy * (1.0 - y * y)


class GRU(Layer):
    """Unidirectional GRU.

    r = sig(x W_r + h U_r + b_r), z = sig(x W_z + h U_z + b_z),
    n = tanh(x W_h + (r * h) U_h + b_h), h' = (1 - z) * h + z * n.
    """

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.hidden = n_in, hidden
        bound = 1.0 / np.sqrt(hidden)
        self.params = {}
        for g in "rzh":
            self.params["W_" + g] = _uniform(rng, (n_in, hidden), bound)
        for g in "rzh":
            self.params["U_" + g] = _uniform(rng, (hidden, hidden), bound)
        for g in "rzh":
            self.params["b_" + g] = _uniform(rng, (hidden,), bound)
        self._init_grads()

    def forward(self, x, h0=None):
        B, L, F = x.shape
        if F != self.n_in:
            raise ValueError(f"GRU expects {self.n_in} input features, got {F}")
        p = self.params
        H = self.hidden
        W = np.concatenate([p["W_r"], p["W_z"], p["W_h"]], axis=1)
        b = np.concatenate([p["b_r"], p["b_z"], p["b_h"]])
        U_rz = np.concatenate([p["U_r"], p["U_z"]], axis=1)
        U_h = p["U_h"]
        xw = x @ W + b
        h = np.zeros((B, H)) if h0 is None else np.broadcast_to(h0, (B, H)).astype(np.float64)
        hs = np.empty((B, L + 1, H))
        hs[:, 0] = h
        rs = np.empty((B, L, H))
        zs = np.empty((B, L, H))
        ns = np.empty((B, L, H))
        for t in range(L):
            rz = sigmoid(xw[:, t, :2 * H] + h @ U_rz)
            r, z = rz[:, :H], rz[:, H:]
            n = np.tanh(xw[:, t, 2 * H:] + (r * h) @ U_h)
            h = h + z * (n - h)
            rs[:, t], zs[:, t], ns[:, t], hs[:, t + 1] = r, z, n, h
        return hs[:, 1:], (x, hs, rs, zs, ns)

    def backward(self, dout, cache):
        x, hs, rs, zs, ns = cache
        p = self.params
        B, L, _ = x.shape
        H = self.hidden
        U_rz = np.concatenate([p["U_r"], p["U_z"]], axis=1)
        U_h = p["U_h"]
        dxw = np.empty((B, L, 3 * H))
        dU_rz = np.zeros((H, 2 * H))
        dU_h = np.zeros((H, H))
        dh_next = np.zeros((B, H))
        for t in range(L - 1, -1, -1):
            hp, r, z, n = hs[:, t], rs[:, t], zs[:, t], ns[:, t]
            dh = dout[:, t] + dh_next
            da_n = dh * z * (1.0 - n * n)
            dz = dh * (n - hp)
            dh_prev = dh * (1.0 - z)
            drh = da_n @ U_h.T
            dU_h += (r * hp).T @ da_n
            dh_prev += drh * r
            da_rz = np.concatenate([drh * hp * r * (1.0 - r), dz * z * (1.0 - z)], axis=1)
            dU_rz += hp.T @ da_rz
            dh_prev += da_rz @ U_rz.T
            dxw[:, t, :2 * H] = da_rz
            dxw[:, t, 2 * H:] = da_n
            dh_next = dh_prev
        flat_x = x.reshape(-1, self.n_in)
        flat_d = dxw.reshape(-1, 3 * H)
        dW = flat_x.T @ flat_d
        db = flat_d.sum(axis=0)
        g = self.grads
        for i, gate in enumerate("rzh"):
            g["W_" + gate] += dW[:, i * H:(i + 1) * H]
            g["b_" + gate] += db[i * H:(i + 1) * H]
        g["U_r"] += dU_rz[:, :H]
        g["U_z"] += dU_rz[:, H:]
        g["U_h"] += dU_h
        W = np.concatenate([p["W_r"], p["W_z"], p["W_h"]], axis=1)
        return dxw @ W.T


class BiGRU(Layer):
    """Forward and time-reversed GRU, outputs concatenated per position."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.fwd = GRU(n_in, hidden, rng)
        self.bwd = GRU(n_in, hidden, rng)
        self.n_in, self.hidden = n_in, hidden

    @property
    def params(self):
        return {**{"fwd." + k: v for k, v in self.fwd.params.items()},
                **{"bwd." + k: v for k, v in self.bwd.params.items()}}

    @property
    def grads(self):
        return {**{"fwd." + k: v for k, v in self.fwd.grads.items()},
                **{"bwd." + k: v for k, v in self.bwd.grads.items()}}

    def zero_grad(self):
        self.fwd.zero_grad()
        self.bwd.zero_grad()

    def forward(self, x):
        hf, cf = self.fwd.forward(x)
        hb, cb = self.bwd.forward(x[:, ::-1])
        return np.concatenate([hf, hb[:, ::-1]], axis=-1), (cf, cb)

    def backward(self, dout, cache):
        cf, cb = cache
        H = self.hidden
        dx = self.fwd.backward(dout[..., :H], cf)
        dx += self.bwd.backward(np.ascontiguousarray(dout[:, ::-1, H:]), cb)[:, ::-1]
        return dx


class Conv1dSame(Layer):
    """Stride-1 cross-correlation with ``(k-1)/2`` zeros on each side."""

    def __init__(self, n_in: int, n_out: int, kernel: int = 5, rng: np.random.Generator | None = None):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out, self.kernel = n_in, n_out, kernel
        self.pad = (kernel - 1) // 2
        bound = 1.0 / np.sqrt(n_in * kernel)
        self.params = {"W": _uniform(rng, (n_out, n_in, kernel), bound), "b": _uniform(rng, (n_out,), bound)}
        self._init_grads()

    def forward(self, x):
        B, L, F = x.shape
        if F != self.n_in:
            raise ValueError(f"Conv1dSame expects {self.n_in} input features, got {F}")
        xp = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))
        W = self.params["W"]
        y = np.broadcast_to(self.params["b"], (B, L, self.n_out)).copy()
        for j in range(self.kernel):
            y += xp[:, j:j + L] @ W[:, :, j].T
        return y, xp

    def backward(self, dy, xp):
        B, L, _ = dy.shape
        W = self.params["W"]
        dxp = np.zeros_like(xp)
        flat_dy = dy.reshape(-1, self.n_out)
        for j in range(self.kernel):
            self.grads["W"][:, :, j] += flat_dy.T @ xp[:, j:j + L].reshape(-1, self.n_in)
            dxp[:, j:j + L] += dy @ W[:, :, j]
        self.grads["b"] += flat_dy.sum(axis=0)
        return dxp[:, self.pad:self.pad + L]


class Sequential(Layer):
    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    @property
    def params(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    @property
    def grads(self):
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x)
            caches.append(c)
        return x, caches

    def backward(self, dy, caches):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(dy, c)
        return dy


# --- losses ---

def _bce_terms(pred, target):
    p = np.clip(np.asarray(pred, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {y.shape}")
    return p, y, -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def bce_loss(pred, target) -> float:
    """Mean binary cross-entropy, predictions clamped to [1e-7, 1 - 1e-7]."""
    return float(_bce_terms(pred, target)[2].mean())


def bce_grad(pred, target) -> np.ndarray:
    """d bce_loss / d pred; zero where the clamp is active."""
    raw = np.asarray(pred, dtype=np.float64)
    p, y, _ = _bce_terms(pred, target)
    g = (p - y) / (p * (1.0 - p)) / p.size
    return np.where((raw < BCE_EPS) | (raw > 1.0 - BCE_EPS), 0.0, g)


def max_bce_loss(pred, target) -> float:
    """Largest per-position BCE along the last axis, averaged over leading axes."""
    terms = _bce_terms(pred, target)[2]
    return float(terms.max(axis=-1).mean())


def max_bce_grad(pred, target) -> np.ndarray:
    raw = np.asarray(pred, dtype=np.float64)
    p, y, terms = _bce_terms(pred, target)
    idx = terms.argmax(axis=-1)
    mask = np.zeros_like(terms)
    np.put_along_axis(mask, idx[..., None], 1.0, axis=-1)
    n_blocks = terms.size // terms.shape[-1]
    g = mask * (p - y) / (p * (1.0 - p)) / n_blocks
    return np.where((raw < BCE_EPS) | (raw > 1.0 - BCE_EPS), 0.0, g)


LOSSES = {"bce": (bce_loss, bce_grad), "max_bce": (max_bce_loss, max_bce_grad)}


# --- optimizer ---

class Adam:
    """Adam with bias correction over a list of ``(name, param, grad)`` triples.

    Parameters are updated in place.
    """

    def __init__(self, parameters, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.parameters = list(parameters)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for _, p, _ in self.parameters]
        self.v = [np.zeros_like(p) for _, p, _ in self.parameters]
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for (name, p, g), m, v in zip(self.parameters, self.m, self.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state: Adam, params=None, grads=None) -> Adam:
    """Functional spelling of ``Adam.step``; returns the same (mutated) state."""
    state.step()
    return state


# --- verification ---

def grad_check(f: Callable[[], float], params: dict[str, np.ndarray], analytic: dict[str, np.ndarray],
               step: float = 1e-4, n_samples: int | None = 20, rng: np.random.Generator | None = None,
               floor: float = 1e-8) -> float:
    """Max relative error between ``analytic`` gradients and central differences.

    ``f`` is re-evaluated after perturbing entries of ``params`` in place. Up to
    ``n_samples`` coordinates per array are probed (all of them when None).
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        g = analytic[name].reshape(-1)
        if n_samples is None or n_samples >= flat.size:
            idx = np.arange(flat.size)
        else:
            idx = rng.choice(flat.size, size=n_samples, replace=False)
        for i in idx:
            old = flat[i]
            flat[i] = old + step
            fp = f()
            flat[i] = old - step
            fm = f()
            flat[i] = old
            num = (fp - fm) / (2.0 * step)
            err = abs(num - g[i]) / max(abs(num), abs(g[i]), floor)
            worst = max(worst, err)
    return worst
