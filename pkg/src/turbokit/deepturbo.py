"""Neural turbo decoders: DeepTurbo, DeepTurbo-CNN and a NeuralBCJR-style variant.

Every decoder keeps the classical two-stage loop. Stage one sees
``(y1, y2, prior)``, stage two sees ``(pi(y1), y3, pi(q))``. Soft information
between stages is an ``(L, K)`` tensor per block. A learned linear head with a
logistic output reads the final deinterleaved posterior.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .channel import ReceivedBlock
from .code import Permutation, make_permutation
from .nn import BiGRU, Conv1dSame, Linear, Sequential, Tanh, sigmoid

VARIANTS = ("deepturbo", "deepturbo_cnn", "neural_bcjr")


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "deepturbo"
    iterations: int = 6
    posterior_width: int = 5
    num_layers: int = 2
    hidden: int = 100
    kernel: int = 5
    shared_weights: bool = False
    residual: bool = True
    block_length: int = 100

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.iterations < 1 or self.posterior_width < 1:
            raise ValueError("iterations and posterior_width must be at least 1")
        if self.num_layers < 1 or self.hidden < 1 or self.block_length < 1:
            raise ValueError("num_layers, hidden and block_length must be positive")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        if self.variant == "neural_bcjr" and (not self.shared_weights or self.posterior_width != 1):
            raise ValueError("neural_bcjr requires shared_weights=True and posterior_width=1")

    @classmethod
    def preset(cls, variant: str = "deepturbo", **overrides) -> "ModelConfig":
        """Per-variant defaults (full scale), with keyword overrides."""
        base = {
            "deepturbo": dict(iterations=6, posterior_width=5, num_layers=2, hidden=100),
            "deepturbo_cnn": dict(iterations=6, posterior_width=5, num_layers=5, hidden=100, kernel=5),
            "neural_bcjr": dict(iterations=6, posterior_width=1, num_layers=2, hidden=100,
                                shared_weights=True, residual=False),
        }
        if variant not in base:
            raise ValueError(f"unknown variant {variant!r}")
        return cls(variant=variant, **{**base[variant], **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown model config fields {sorted(extra)}")
        return cls(**d)


class SisoNet:
    """One neural SISO block: body over ``[y_sys, y_par, prior]`` then a linear map to K."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        K = cfg.posterior_width
        n_in = 2 + K
        layers = []
        if cfg.variant == "deepturbo_cnn":
            width = n_in
            for _ in range(cfg.num_layers):
                layers += [Conv1dSame(width, cfg.hidden, cfg.kernel, rng), Tanh()]
                width = cfg.hidden
        else:
            width = n_in
            for _ in range(cfg.num_layers):
                layers.append(BiGRU(width, cfg.hidden, rng))
                width = 2 * cfg.hidden
        self.body = Sequential(*layers)
        self.out = Linear(width, K, rng)
        self.residual = cfg.residual
        self.K = K

    @property
    def params(self):
        return {**{"body." + k: v for k, v in self.body.params.items()},
                **{"out." + k: v for k, v in self.out.params.items()}}

    @property
    def grads(self):
        return {**{"body." + k: v for k, v in self.body.grads.items()},
                **{"out." + k: v for k, v in self.out.grads.items()}}

    def zero_grad(self):
        self.body.zero_grad()
        self.out.zero_grad()

    def forward(self, y_sys, y_par, prior):
        y_sys = np.asarray(y_sys, dtype=np.float64)
        y_par = np.asarray(y_par, dtype=np.float64)
        prior = np.asarray(prior, dtype=np.float64)
        if y_sys.shape != y_par.shape or prior.shape != y_sys.shape + (self.K,):
            raise ValueError(f"SISO input shapes disagree: {y_sys.shape}, {y_par.shape}, {prior.shape}")
        x = np.concatenate([y_sys[..., None], y_par[..., None], prior], axis=-1)
        h, cb = self.body.forward(x)
        out, co = self.out.forward(h)
        if self.residual:
            out = out + prior
        return out, (cb, co)

    def backward(self, dout, cache):
        """Returns gradients w.r.t. ``(y_sys, y_par, prior)``."""
        cb, co = cache
        dx = self.body.backward(self.out.backward(dout, co), cb)
        dprior = dx[..., 2:]
        if self.residual:
            dprior = dprior + dout
        return dx[..., 0], dx[..., 1], dprior


def siso_forward(net: SisoNet, y_sys, y_par, prior) -> np.ndarray:
    return net.forward(y_sys, y_par, prior)[0]


class DeepTurboModel:
    def __init__(self, cfg: ModelConfig, seed: int = 0, perm_seed: int | None = 0,
                 perm_kind: str = "random"):
        self.cfg = cfg
        self.seed = seed
        rng = np.random.default_rng(seed)
        n_nets = 1 if cfg.shared_weights else 2 * cfg.iterations
        self.sisos = [SisoNet(cfg, rng) for _ in range(n_nets)]
        self.head = Linear(cfg.posterior_width, 1, rng)
        self.perm_kind = perm_kind
        self.perm_seed = perm_seed
        self._perm = None

    # permutation binding
    @property
    def block_length(self) -> int:
        return self.cfg.block_length

    @property
    def permutation(self) -> Permutation:
        if self._perm is None:
            self._perm = make_permutation(self.block_length, self.perm_kind, self.perm_seed)
        return self._perm

    def rebind(self, block_length: int) -> None:
        """Bind to a new block length; parameters are untouched."""
        self.cfg = replace(self.cfg, block_length=int(block_length))
        self._perm = None

    def siso(self, stage: int) -> SisoNet:
        return self.sisos[0] if self.cfg.shared_weights else self.sisos[stage]

    def named_parameters(self):
        for j, net in enumerate(self.sisos):
            for k in net.params:
                yield f"siso.{j}.{k}", net.params[k], net.grads[k]
        for k in self.head.params:
            yield f"head.{k}", self.head.params[k], self.head.grads[k]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p for name, p, _ in self.named_parameters()}

    def zero_grad(self):
        for net in self.sisos:
            net.zero_grad()
        self.head.zero_grad()

    # forward / backward
    def _inputs(self, received: ReceivedBlock, perm: Permutation | None):
        perm = self.permutation if perm is None else perm
        y1 = np.atleast_2d(np.asarray(received.y1, dtype=np.float64))
        y2 = np.atleast_2d(np.asarray(received.y2, dtype=np.float64))
        y3 = np.atleast_2d(np.asarray(received.y3, dtype=np.float64))
        if y1.shape[-1] != self.block_length or len(perm) != self.block_length:
            raise ValueError(f"block length {y1.shape[-1]} / interleaver {len(perm)} does not match "
                             f"model binding L={self.block_length}")
        return y1, y2, y3, perm

    def forward(self, received: ReceivedBlock, perm: Permutation | None = None, keep_cache: bool = False):
        """Run the iterative pipeline on a batch ``(B, L)``.

        Returns ``(logits, posteriors, cache)`` where ``posteriors`` lists the
        deinterleaved ``(B, L, K)`` posterior after every iteration.
        """
        y1, y2, y3, perm = self._inputs(received, perm)
        fwd, inv = perm.forward, perm.inverse
        y1i = y1[:, fwd]
        prior = np.zeros(y1.shape + (self.cfg.posterior_width,))
        posteriors, caches = [], []
        for i in range(self.cfg.iterations):
            q, c1 = self.siso(2 * i).forward(y1, y2, prior)
            q2, c2 = self.siso(2 * i + 1).forward(y1i, y3, q[:, fwd])
            prior = q2[:, inv]
            posteriors.append(prior)
            if keep_cache:
                caches.append((c1, c2))
        logits, ch = self.head.forward(prior)
        return logits[..., 0], posteriors, ((caches, ch, perm) if keep_cache else None)

    def backward(self, dlogits, cache) -> None:
        caches, ch, perm = cache
        fwd, inv = perm.forward, perm.inverse
        dprior = self.head.backward(dlogits[..., None], ch)
        for i in range(self.cfg.iterations - 1, -1, -1):
            c1, c2 = caches[i]
            _, _, dp2 = self.siso(2 * i + 1).backward(dprior[:, fwd], c2)
            _, _, dprior = self.siso(2 * i).backward(dp2[:, inv], c1)


def build_model(cfg: ModelConfig, seed: int = 0, perm_seed: int | None = 0,
                perm_kind: str = "random") -> DeepTurboModel:
    return DeepTurboModel(cfg, seed=seed, perm_seed=perm_seed, perm_kind=perm_kind)


def deepturbo_decode(model: DeepTurboModel, received: ReceivedBlock,
                     perm: Permutation | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(probs, bits)``; the batch axis is kept if the input had one."""
    logits, _, _ = model.forward(received, perm)
    probs = sigmoid(logits)
    if np.ndim(received.y1) == 1:
        probs = probs[0]
    return probs, (probs >= 0.5).astype(np.int8)


def intermediate_posteriors(model: DeepTurboModel, received: ReceivedBlock,
                            perm: Permutation | None = None) -> list[np.ndarray]:
    _, posteriors, _ = model.forward(received, perm)
    if np.ndim(received.y1) == 1:
        posteriors = [p[0] for p in posteriors]
    return posteriors


class NeuralTurboDecoder:
    """Adapter exposing a trained model to the evaluation harness."""

    def __init__(self, model: DeepTurboModel, decoder_id: str | None = None, chunk: int = 1000):
        self.model = model
        self.decoder_id = decoder_id or model.cfg.variant
        self.chunk = chunk

    @property
    def block_length(self) -> int:
        return self.model.block_length

    def decode(self, received: ReceivedBlock, channel=None) -> np.ndarray:
        y1 = np.atleast_2d(received.y1)
        out = []
        for s in range(0, y1.shape[0], self.chunk):
            part = ReceivedBlock(y1[s:s + self.chunk], np.atleast_2d(received.y2)[s:s + self.chunk],
                                 np.atleast_2d(received.y3)[s:s + self.chunk])
            out.append(deepturbo_decode(self.model, part)[1])
        bits = np.concatenate(out, axis=0)
        return bits[0] if np.ndim(received.y1) == 1 else bits


# --- checkpoints ---

FORMAT_NAME = "turbokit-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def checkpoint_bytes(model: DeepTurboModel) -> bytes:
    params = {}
    for name, p in model.state_dict().items():
        params[name] = {"shape": list(p.shape), "values": [float(v).hex() for v in p.reshape(-1)]}
    doc = {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "model_config": model.cfg.to_dict(),
        "init_seed": model.seed,
        "permutation_kind": model.perm_kind,
        "permutation_seed": model.perm_seed,
        "parameters": params,
    }
    return (json.dumps(doc, sort_keys=True, indent=1) + "\n").encode("utf-8")


def save_checkpoint(model: DeepTurboModel, path) -> Path:
    path = Path(path)
    path.write_bytes(checkpoint_bytes(model))
    return path


def model_from_checkpoint_bytes(data: bytes) -> DeepTurboModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointCorruptError(f"not a readable checkpoint: {e}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise CheckpointCorruptError("missing or wrong 'format' marker")
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format_version {doc.get('format_version')!r}, expected {FORMAT_VERSION}")
    try:
        cfg = ModelConfig.from_dict(doc["model_config"])
        model = DeepTurboModel(cfg, seed=doc["init_seed"], perm_seed=doc["permutation_seed"],
                               perm_kind=doc["permutation_kind"])
        stored = doc["parameters"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointCorruptError(f"malformed checkpoint header: {e!r}") from None
    target = model.state_dict()
    if set(stored) != set(target):
        missing = sorted(set(target) - set(stored))
        extra = sorted(set(stored) - set(target))
        raise CheckpointShapeError(f"parameter names differ from config (missing {missing}, extra {extra})")
    for name, arr in target.items():
        entry = stored[name]
        try:
            shape = tuple(int(s) for s in entry["shape"])
            values = entry["values"]
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointCorruptError(f"malformed entry for {name}: {e!r}") from None
        if shape != arr.shape:
            raise CheckpointShapeError(f"{name}: stored shape {shape} but config implies {arr.shape}")
        if len(values) != math.prod(shape):
            raise CheckpointShapeError(f"{name}: {len(values)} values for shape {shape}")
        try:
            arr.reshape(-1)[:] = [float.fromhex(v) for v in values]
        except (TypeError, ValueError) as e:
            raise CheckpointCorruptError(f"bad numeric value in {name}: {e}") from None
    return model


def load_checkpoint(path) -> DeepTurboModel:
    return model_from_checkpoint_bytes(Path(path).read_bytes())
