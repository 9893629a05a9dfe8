"""Log-MAP BCJR soft-in soft-out decoding and the iterative turbo decoder.

LLRs follow ``log P(u=1) - log P(u=0)``. Channel observations are BPSK
(0 -> -1) over a Gaussian channel, so each stream contributes ``2 y / sigma**2``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .channel import ReceivedBlock
from .code import Permutation, RscSpec, Trellis, build_trellis, deinterleave, interleave, rsc_encode

DEFAULT_LLR_CLIP = 25.0
# noise level handed to the decoder on a noiseless channel
SIGMA_FLOOR = 0.05


@functools.lru_cache(maxsize=None)
def _incoming(trellis: Trellis):
    # for each next state the two (state, input) pairs that lead into it
    prev_s = np.zeros((trellis.num_states, 2), dtype=np.int64)
    prev_u = np.zeros((trellis.num_states, 2), dtype=np.int64)
    fill = np.zeros(trellis.num_states, dtype=np.int64)
    for s in range(trellis.num_states):
        for u in (0, 1):
            ns = trellis.next_state[s, u]
            prev_s[ns, fill[ns]] = s
            prev_u[ns, fill[ns]] = u
            fill[ns] += 1
    if not np.all(fill == 2):
        raise ValueError("trellis is not a valid RSC trellis")
    return prev_s, prev_u


def _as_trellis(code) -> Trellis:
    return code if isinstance(code, Trellis) else build_trellis(code)


def bcjr_siso(y_sys, y_par, prior, trellis: Trellis | RscSpec, sigma: float,
              max_log: bool = False, llr_clip: float | None = None) -> np.ndarray:
    """A-posteriori LLRs of the message bits of one RSC code.

    Inputs have shape ``(..., L)``. The forward recursion starts in state 0;
    the backward recursion ends in a uniform state distribution because the
    encoder is not terminated. Returned LLRs include the systematic channel
    term and the prior.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    trellis = _as_trellis(trellis)
    y_sys = np.asarray(y_sys, dtype=np.float64)
    y_par = np.asarray(y_par, dtype=np.float64)
    prior = np.broadcast_to(np.asarray(prior, dtype=np.float64), y_sys.shape)
    if y_sys.shape != y_par.shape:
        raise ValueError("systematic and parity observations differ in shape")
    lead = y_sys.shape[:-1]
    L = y_sys.shape[-1]
    a = (y_sys / sigma**2 + prior / 2).reshape(-1, L)
    b = (y_par / sigma**2).reshape(-1, L)
    B = a.shape[0]
    S = trellis.num_states
    combine = np.maximum if max_log else np.logaddexp

    u_sign = np.array([-1.0, 1.0])
    p_sign = 2.0 * trellis.parity - 1.0  # (S, 2)
    # gamma[b, t, s, u]
    gamma = a[:, :, None, None] * u_sign + b[:, :, None, None] * p_sign
    prev_s, prev_u = _incoming(trellis)
    nxt = trellis.next_state

    alpha = np.empty((B, L + 1, S))
    alpha[:, 0] = -np.inf
    alpha[:, 0, 0] = 0.0
    for t in range(L):
        cand = alpha[:, t, :, None] + gamma[:, t]
        new = combine(cand[:, prev_s[:, 0], prev_u[:, 0]], cand[:, prev_s[:, 1], prev_u[:, 1]])
        alpha[:, t + 1] = new - new.max(axis=1, keepdims=True)

    beta = np.zeros((B, S))
    llr = np.empty((B, L))
    for t in range(L - 1, -1, -1):
        cand = gamma[:, t] + beta[:, nxt]  # (B, S, 2)
        full = alpha[:, t, :, None] + cand
        if max_log:
            llr[:, t] = full[:, :, 1].max(axis=1) - full[:, :, 0].max(axis=1)
        else:
            llr[:, t] = logsumexp(full[:, :, 1], axis=1) - logsumexp(full[:, :, 0], axis=1)
        beta = combine(cand[:, :, 0], cand[:, :, 1])
        beta = beta - beta.max(axis=1, keepdims=True)
    if llr_clip is not None:
        np.clip(llr, -llr_clip, llr_clip, out=llr)
    return llr.reshape(lead + (L,))


@dataclass(frozen=True)
class TurboDecodeConfig:
    iterations: int = 6
    sigma: float = 1.0
    llr_clip: float | None = DEFAULT_LLR_CLIP
    max_log: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def estimate_sigma(received: ReceivedBlock, sigma: float) -> float:
    """Noise-level hook; the decoder is given the true sigma, returned unchanged."""
    return sigma


def _clip(x, c):
    return x if c is None else np.clip(x, -c, c)


def turbo_decode(received: ReceivedBlock, spec: RscSpec | Trellis, perm: Permutation,
                 cfg: TurboDecodeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Iterative two-stage turbo decoding; returns (bits, final LLRs).

    Each stage passes on its extrinsic output: the posterior minus the prior
    it was given and minus the noise-weighted systematic observation.
    """
    trellis = _as_trellis(spec)
    sigma = estimate_sigma(received, cfg.sigma)
    y1 = np.asarray(received.y1, dtype=np.float64)
    y2 = np.asarray(received.y2, dtype=np.float64)
    y3 = np.asarray(received.y3, dtype=np.float64)
    y1i = interleave(y1, perm)
    w = 2.0 / sigma**2
    prior1 = np.zeros_like(y1)
    post2 = None
    for _ in range(cfg.iterations):
        post1 = bcjr_siso(y1, y2, prior1, trellis, sigma, max_log=cfg.max_log)
        ext1 = _clip(post1 - prior1 - w * y1, cfg.llr_clip)
        prior2 = interleave(ext1, perm)
        post2 = bcjr_siso(y1i, y3, prior2, trellis, sigma, max_log=cfg.max_log)
        ext2 = _clip(post2 - prior2 - w * y1i, cfg.llr_clip)
        prior1 = deinterleave(ext2, perm)
    final = _clip(deinterleave(post2, perm), cfg.llr_clip)
    return (final > 0).astype(np.int8), final


class ClassicalTurboDecoder:
    """Turbo decoder bound to a code and interleaver, given the channel's sigma per call."""

    def __init__(self, spec: RscSpec, perm: Permutation, iterations: int = 6,
                 llr_clip: float | None = DEFAULT_LLR_CLIP, max_log: bool = False,
                 decoder_id: str | None = None):
        self.spec = spec
        self.trellis = build_trellis(spec)
        self.perm = perm
        self.iterations = iterations
        self.llr_clip = llr_clip
        self.max_log = max_log
        self.decoder_id = decoder_id or f"turbo-i{iterations}"

    @property
    def block_length(self) -> int:
        return len(self.perm)

    def decode(self, received: ReceivedBlock, channel) -> np.ndarray:
        sigma = max(channel.decoder_sigma, SIGMA_FLOOR)
        cfg = TurboDecodeConfig(iterations=self.iterations, sigma=sigma,
                                llr_clip=self.llr_clip, max_log=self.max_log)
        bits, _ = turbo_decode(received, self.trellis, self.perm, cfg)
        return bits


# --- exhaustive MAP oracles (small L only) ---

MAX_ORACLE_LENGTH = 16


@functools.lru_cache(maxsize=32)
def _messages(L: int) -> np.ndarray:
    idx = np.arange(1 << L, dtype=np.int64)
    return ((idx[:, None] >> np.arange(L)) & 1).astype(np.int8)


def _bitwise_llr(metrics: np.ndarray, msgs: np.ndarray) -> np.ndarray:
    # metrics (B, M) log-weights of each message, msgs (M, L)
    out = np.empty((metrics.shape[0], msgs.shape[1]))
    for t in range(msgs.shape[1]):
        one = msgs[:, t] == 1
        out[:, t] = logsumexp(metrics[:, one], axis=1) - logsumexp(metrics[:, ~one], axis=1)
    return out


def _check_oracle_len(L):
    if L > MAX_ORACLE_LENGTH:
        raise ValueError(f"exhaustive MAP limited to L <= {MAX_ORACLE_LENGTH}, got {L}")


def rsc_map_oracle(y_sys, y_par, prior, spec: RscSpec | Trellis, sigma: float) -> np.ndarray:
    """Bitwise MAP LLRs of one RSC code by enumerating every message."""
    y_sys = np.asarray(y_sys, dtype=np.float64)
    L = y_sys.shape[-1]
    _check_oracle_len(L)
    prior = np.broadcast_to(np.asarray(prior, dtype=np.float64), y_sys.shape)
    msgs = _messages(L)
    s_sys = 2.0 * msgs - 1.0
    s_par = 2.0 * rsc_encode(msgs, _as_trellis(spec)) - 1.0
    lead = y_sys.shape[:-1]
    ys = y_sys.reshape(-1, L)
    yp = np.asarray(y_par, dtype=np.float64).reshape(-1, L)
    pr = prior.reshape(-1, L)
    metrics = (ys / sigma**2 + pr / 2) @ s_sys.T + (yp / sigma**2) @ s_par.T
    return _bitwise_llr(metrics, msgs).reshape(lead + (L,))


def map_oracle(received: ReceivedBlock, spec: RscSpec | Trellis, perm: Permutation,
               sigma: float) -> np.ndarray:
    """Bitwise MAP LLRs of the full turbo code by enumerating every message."""
    y1 = np.asarray(received.y1, dtype=np.float64)
    L = y1.shape[-1]
    _check_oracle_len(L)
    if len(perm) != L:
        raise ValueError("interleaver length does not match the received block")
    trellis = _as_trellis(spec)
    msgs = _messages(L)
    s1 = 2.0 * msgs - 1.0
    s2 = 2.0 * rsc_encode(msgs, trellis) - 1.0
    s3 = 2.0 * rsc_encode(interleave(msgs, perm), trellis) - 1.0
    lead = y1.shape[:-1]
    metrics = (y1.reshape(-1, L) @ s1.T
               + np.asarray(received.y2, dtype=np.float64).reshape(-1, L) @ s2.T
               + np.asarray(received.y3, dtype=np.float64).reshape(-1, L) @ s3.T) / sigma**2
    return _bitwise_llr(metrics, msgs).reshape(lead + (L,))
