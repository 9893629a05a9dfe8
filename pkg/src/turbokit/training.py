"""Training loops: end-to-end decoder training, BCJR imitation, auxiliary probes,
and block-length transfer.

Every random draw comes from a stream derived from ``numpy.random.SeedSequence``
with an explicit integer key, so a (seed, config) pair fixes the whole run.
"""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .channel import ChannelTemplate, ReceivedBlock, snr_to_sigma, transmit
from .classical import bcjr_siso
from .code import Permutation, RscSpec, TURBO_757, build_trellis, rsc_encode, turbo_encode
from .deepturbo import DeepTurboModel, SisoNet, intermediate_posteriors
from .nn import LOSSES, Adam, Linear, bce_grad, bce_loss, sigmoid

log = logging.getLogger(__name__)

# stream tags for SeedSequence keys
_TRAIN, _VAL, _PRETRAIN, _PROBE = 1, 2, 3, 4


class TrainingDiverged(RuntimeError):
    pass


def derived_rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def gen_batch(batch_size: int, block_length: int, snr_db: float, template: ChannelTemplate,
              spec: RscSpec, perm: Permutation, rng: np.random.Generator):
    """Fresh uniform messages, turbo-encoded and sent through the channel."""
    msgs = rng.integers(0, 2, size=(batch_size, block_length), dtype=np.int8)
    cw = turbo_encode(msgs, spec, perm)
    return msgs, transmit(cw, template.at_snr(snr_db), rng)


@dataclass(frozen=True)
class TrainConfig:
    """``snr_schedule`` lists ``(snr_db, span)``. An integer span lasts that many
    epochs; ``None`` lasts until the next learning-rate decay (or the end for
    the last entry). The default trains at 0 dB, then switches to -1.5 dB at the
    first decay.
    """

    block_length: int = 100
    batch_size: int = 500
    batches_per_epoch: int = 100
    epochs: int = 200
    lr: float = 1e-3
    lr_decay_factor: float = 10.0
    patience_epochs: int = 10
    min_improvement: float = 1e-4
    snr_schedule: tuple = ((0.0, None), (-1.5, None))
    channel: ChannelTemplate = field(default_factory=ChannelTemplate)
    loss: str = "bce"
    seed: int = 0
    validation_size: int = 5000
    validation_seed: int = 12345
    code: RscSpec = TURBO_757

    def __post_init__(self):
        for name in ("block_length", "batch_size", "batches_per_epoch", "validation_size", "patience_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if not self.lr > 0 or not self.lr_decay_factor >= 1:
            raise ValueError("lr must be positive and lr_decay_factor >= 1")
        sched = tuple((float(s), None if n is None else int(n)) for s, n in self.snr_schedule)
        if not sched:
            raise ValueError("snr_schedule must not be empty")
        if sum(n for _, n in sched if n is not None) > self.epochs and self.epochs > 0:
            raise ValueError("snr_schedule spans exceed the number of epochs")
        if any(n is not None and n < 1 for _, n in sched):
            raise ValueError("snr_schedule spans must be positive")
        object.__setattr__(self, "snr_schedule", sched)


# desk scale trains 100 steps only, so it uses a larger step size than the full-scale 1e-3
DESK_PRESET = dict(block_length=20, batch_size=128, batches_per_epoch=10, epochs=10, lr=1e-2)
DESK_MODEL = dict(iterations=3, posterior_width=5, num_layers=2, hidden=25, block_length=20)
FULL_PRESET = dict(block_length=100, batch_size=500, batches_per_epoch=100, epochs=200, lr=1e-3)
FULL_MODEL = dict(iterations=6, posterior_width=5, num_layers=2, hidden=100, block_length=100)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float
    snr_db: float


@dataclass
class TrainHistory:
    initial_val_loss: float = math.nan
    records: list[EpochRecord] = field(default_factory=list)

    HEADER = ("epoch", "train_loss", "val_loss", "lr", "snr_db")

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.HEADER)
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.val_loss), repr(r.lr), repr(r.snr_db)])
        return path


def _batched_loss(model, msgs, received, loss_fn, chunk=1000):
    total, n = 0.0, 0
    for s in range(0, msgs.shape[0], chunk):
        part = ReceivedBlock(received.y1[s:s + chunk], received.y2[s:s + chunk], received.y3[s:s + chunk])
        logits, _, _ = model.forward(part)
        m = msgs[s:s + chunk]
        total += loss_fn(sigmoid(logits), m) * m.shape[0]
        n += m.shape[0]
    return total / n


class _Schedule:
    def __init__(self, entries):
        self.entries = list(entries)
        self.idx = 0
        self.used = 0  # epochs spent in the current entry

    @property
    def snr(self):
        return self.entries[self.idx][0]

    def end_epoch(self):
        self.used += 1
        span = self.entries[self.idx][1]
        if span is not None and self.used >= span and self.idx + 1 < len(self.entries):
            self.idx += 1
            self.used = 0
            return True
        return False

    def on_decay(self):
        if self.entries[self.idx][1] is None and self.idx + 1 < len(self.entries):
            self.idx += 1
            self.used = 0
            return True
        return False


def train(model: DeepTurboModel, cfg: TrainConfig) -> tuple[DeepTurboModel, TrainHistory]:
    """Adam training of every model parameter on freshly generated batches.

    Learning rate is divided by ``lr_decay_factor`` once validation loss has
    not improved by ``min_improvement`` for ``patience_epochs`` epochs.
    """
    if cfg.block_length != model.block_length:
        raise ValueError(f"train block_length {cfg.block_length} != model binding {model.block_length}")
    loss_fn, grad_fn = LOSSES[cfg.loss]
    perm = model.permutation
    spec = cfg.code
    trellis = build_trellis(spec)
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history

    sched = _Schedule(cfg.snr_schedule)

    def validation_set(snr):
        return gen_batch(cfg.validation_size, cfg.block_length, snr, cfg.channel, trellis, perm,
                         derived_rng(cfg.validation_seed, _VAL))

    val_snr = sched.snr
    val_msgs, val_rx = validation_set(val_snr)
    best = _batched_loss(model, val_msgs, val_rx, loss_fn)
    history.initial_val_loss = best
    stale = 0
    opt = Adam(list(model.named_parameters()), lr=cfg.lr)

    for epoch in range(1, cfg.epochs + 1):
        snr = sched.snr
        if snr != val_snr:
            val_snr = snr
            val_msgs, val_rx = validation_set(snr)
            best = _batched_loss(model, val_msgs, val_rx, loss_fn)
            stale = 0
        train_losses = []
        for b in range(cfg.batches_per_epoch):
            msgs, rx = gen_batch(cfg.batch_size, cfg.block_length, snr, cfg.channel, trellis, perm,
                                 derived_rng(cfg.seed, _TRAIN, epoch, b))
            logits, _, cache = model.forward(rx, keep_cache=True)
            probs = sigmoid(logits)
            loss = loss_fn(probs, msgs)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss at epoch {epoch}, batch {b}")
            model.zero_grad()
            model.backward(grad_fn(probs, msgs) * probs * (1.0 - probs), cache)
            opt.step()
            train_losses.append(loss)
        val_loss = _batched_loss(model, val_msgs, val_rx, loss_fn)
        if not math.isfinite(val_loss):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.records.append(EpochRecord(epoch, float(np.mean(train_losses)), val_loss, opt.lr, snr))
        log.info("epoch %d snr %.2f train %.5f val %.5f lr %.2g", epoch, snr, train_losses[-1], val_loss, opt.lr)

        if val_loss < best - cfg.min_improvement:
            best, stale = val_loss, 0
        else:
            stale += 1
        sched.end_epoch()
        if stale >= cfg.patience_epochs:
            opt.lr /= cfg.lr_decay_factor
            stale = 0
            sched.on_decay()
    return model, history


def trained_ber(model: DeepTurboModel, snr_db: float, num_blocks: int, seed: int,
                template: ChannelTemplate | None = None, spec: RscSpec = TURBO_757) -> float:
    """Bit error rate of ``model`` on ``num_blocks`` fresh blocks."""
    template = template or ChannelTemplate()
    msgs, rx = gen_batch(num_blocks, model.block_length, snr_db, template, spec, model.permutation,
                         derived_rng(seed))
    logits, _, _ = model.forward(rx)
    return float(np.mean((logits > 0) != msgs))


# --- BCJR imitation ---

@dataclass(frozen=True)
class PretrainConfig:
    """Supervised imitation of ``bcjr_siso`` by a K=1 SISO network.

    Priors follow the consistent-Gaussian LLR model ``mu * (2u - 1) + sqrt(2 mu) n``
    with ``mu`` uniform in ``[0, prior_mu_max]`` per block.
    """

    block_length: int = 20
    num_samples: int = 10_000
    batch_size: int = 100
    epochs: int = 5
    lr: float = 1e-3
    prior_mu_max: float = 4.0
    target_clip: float = 25.0


def imitation_samples(n: int, cfg: PretrainConfig, spec: RscSpec, snr_db: float, rng: np.random.Generator):
    """Returns ``(y_sys, y_par, prior, target_llr)`` for ``n`` blocks."""
    L = cfg.block_length
    sigma = snr_to_sigma(snr_db)
    trellis = build_trellis(spec)
    u = rng.integers(0, 2, size=(n, L), dtype=np.int8)
    x = np.stack([2.0 * u - 1.0, 2.0 * rsc_encode(u, trellis) - 1.0], axis=1)
    y = x + sigma * rng.standard_normal(x.shape)
    mu = rng.uniform(0.0, cfg.prior_mu_max, size=(n, 1))
    prior = mu * (2.0 * u - 1.0) + np.sqrt(2.0 * mu) * rng.standard_normal((n, L))
    target = bcjr_siso(y[:, 0], y[:, 1], prior, trellis, sigma, llr_clip=cfg.target_clip)
    return y[:, 0], y[:, 1], prior, target


def sign_agreement(net: SisoNet, y_sys, y_par, prior, target) -> float:
    out = net.forward(y_sys, y_par, prior[..., None])[0][..., 0]
    return float(np.mean(np.sign(out) == np.sign(target)))


def bcjr_imitation_pretrain(net: SisoNet, spec: RscSpec, snr_db: float, num_samples: int | None = None,
                            seed: int = 0, cfg: PretrainConfig | None = None) -> SisoNet:
    """Regress ``net`` onto BCJR posterior LLRs with mean squared error."""
    cfg = cfg or PretrainConfig()
    if num_samples is not None:
        cfg = replace(cfg, num_samples=num_samples)
    if net.K != 1:
        raise ValueError("BCJR imitation needs a SISO network with posterior width 1")
    ys, yp, pr, tgt = imitation_samples(cfg.num_samples, cfg, spec, snr_db, derived_rng(seed, _PRETRAIN))
    named = [(f"siso.{k}", net.params[k], net.grads[k]) for k in net.params]
    opt = Adam(named, lr=cfg.lr)
    order_rng = derived_rng(seed, _PRETRAIN, 1)
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(cfg.num_samples)
        for s in range(0, cfg.num_samples, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            out, cache = net.forward(ys[idx], yp[idx], pr[idx][..., None])
            err = out[..., 0] - tgt[idx]
            loss = float(np.mean(err * err))
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite imitation loss at epoch {epoch}")
            net.zero_grad()
            net.backward((2.0 * err / err.size)[..., None], cache)
            opt.step()
        log.info("imitation epoch %d mse %.4f", epoch, loss)
    return net


# --- auxiliary probing ---

@dataclass(frozen=True)
class ProbeConfig:
    train_snr_db: float = 0.0
    eval_snr_db: float = 0.0
    steps: int = 300
    batch_size: int = 128
    lr: float = 1e-2
    eval_blocks: int = 2000
    seed: int = 0
    channel: ChannelTemplate = field(default_factory=ChannelTemplate)
    code: RscSpec = TURBO_757


def auxiliary_probe(model: DeepTurboModel, iteration: int, cfg: ProbeConfig | None = None) -> tuple[Linear, float]:
    """Fit a (K -> 1) logistic readout to the frozen posterior after ``iteration``.

    ``iteration`` counts from 1. Returns the probe and its BER at ``eval_snr_db``.
    """
    cfg = cfg or ProbeConfig()
    if not 1 <= iteration <= model.cfg.iterations:
        raise ValueError(f"iteration must lie in 1..{model.cfg.iterations}")
    perm = model.permutation
    trellis = build_trellis(cfg.code)
    probe = Linear(model.cfg.posterior_width, 1, derived_rng(cfg.seed, _PROBE, 0))
    opt = Adam(list(probe.named_parameters()), lr=cfg.lr)
    for step in range(cfg.steps):
        msgs, rx = gen_batch(cfg.batch_size, model.block_length, cfg.train_snr_db, cfg.channel, trellis, perm,
                             derived_rng(cfg.seed, _PROBE, 1, step))
        feats = intermediate_posteriors(model, rx)[iteration - 1]
        logits, cache = probe.forward(feats)
        probs = sigmoid(logits[..., 0])
        loss = bce_loss(probs, msgs)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite probe loss at step {step}")
        probe.zero_grad()
        probe.backward((bce_grad(probs, msgs) * probs * (1.0 - probs))[..., None], cache)
        opt.step()
    msgs, rx = gen_batch(cfg.eval_blocks, model.block_length, cfg.eval_snr_db, cfg.channel, trellis, perm,
                         derived_rng(cfg.seed, _PROBE, 2))
    feats = intermediate_posteriors(model, rx)[iteration - 1]
    ber = float(np.mean((probe.forward(feats)[0][..., 0] > 0) != msgs))
    return probe, ber


# --- block-length transfer ---

def transfer_retrain(model: DeepTurboModel, block_length: int, cfg: TrainConfig) -> tuple[DeepTurboModel, TrainHistory]:
    """Copy ``model``, rebind it to ``block_length`` and fine-tune per ``cfg``."""
    new = copy.deepcopy(model)
    new.rebind(block_length)
    cfg = replace(cfg, block_length=int(block_length))
    return train(new, cfg)
