"""BPSK modulation, SNR conversion, and the AWGN / ATN / radar noise models.

SNR convention: ``snr_db = -20 log10(sigma)`` for unit-energy BPSK symbols,
so 0 dB means unit noise standard deviation and -1.5 dB means sigma ~ 1.1885.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


def modulate(bits) -> np.ndarray:
    """Map 0 -> -1 and 1 -> +1."""
    return 2.0 * np.asarray(bits, dtype=np.float64) - 1.0


def demodulate(symbols) -> np.ndarray:
    """Hard decision: positive -> 1, otherwise 0."""
    return (np.asarray(symbols) > 0).astype(np.int8)


def snr_to_sigma(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 20.0)


def sigma_to_snr(sigma: float) -> float:
    return -20.0 * math.log10(sigma)


@dataclass(frozen=True)
class AWGN:
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def decoder_sigma(self) -> float:
        return self.sigma

    def to_dict(self) -> dict:
        return {"type": "awgn", "sigma": self.sigma}


@dataclass(frozen=True)
class ATN:
    """Additive Student-t noise: ``sigma * T(nu)``."""

    nu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.nu > 2:
            raise ValueError("nu must exceed 2 (finite noise variance)")

    @property
    def decoder_sigma(self) -> float:
        # standard deviation of the noise, what a Gaussian decoder would be tuned to
        return self.sigma * math.sqrt(self.nu / (self.nu - 2.0))

    def to_dict(self) -> dict:
        return {"type": "atn", "nu": self.nu, "sigma": self.sigma}


@dataclass(frozen=True)
class Radar:
    """Gaussian background plus per-symbol Bernoulli(p) high-variance bursts."""

    sigma1: float
    sigma2: float
    p: float

    def __post_init__(self):
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ValueError("sigma1 and sigma2 must be non-negative")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")

    @property
    def decoder_sigma(self) -> float:
        return self.sigma1

    def to_dict(self) -> dict:
        return {"type": "radar", "sigma1": self.sigma1, "sigma2": self.sigma2, "p": self.p}


ChannelModel = Union[AWGN, ATN, Radar]


def channel_from_dict(d: dict) -> ChannelModel:
    d = dict(d)
    kind = str(d.pop("type", "")).lower()
    try:
        if kind == "awgn":
            return AWGN(sigma=float(d.pop("sigma")))
        if kind == "atn":
            return ATN(nu=float(d.pop("nu")), sigma=float(d.pop("sigma")))
        if kind == "radar":
            return Radar(sigma1=float(d.pop("sigma1")), sigma2=float(d.pop("sigma2")), p=float(d.pop("p")))
    except KeyError as e:
        raise ValueError(f"channel {kind!r} missing field {e.args[0]!r}") from None
    raise ValueError(f"unknown channel type {kind!r}")


@dataclass(frozen=True)
class ChannelTemplate:
    """A channel family whose noise scale is set from an SNR.

    AWGN uses ``sigma = snr_to_sigma(snr)``. ATN scales the Student-t so the
    noise variance equals ``snr_to_sigma(snr)**2``. Radar uses the SNR for the
    background ``sigma1`` and keeps ``sigma2`` and ``p`` fixed.
    """

    kind: str = "awgn"
    nu: float = 3.0
    sigma2: float = 5.0
    p: float = 0.05

    def at_snr(self, snr_db: float) -> ChannelModel:
        s = snr_to_sigma(snr_db)
        if self.kind == "awgn":
            return AWGN(s)
        if self.kind == "atn":
            return ATN(nu=self.nu, sigma=s * math.sqrt((self.nu - 2.0) / self.nu))
        if self.kind == "radar":
            return Radar(sigma1=s, sigma2=self.sigma2, p=self.p)
        raise ValueError(f"unknown channel type {self.kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelTemplate":
        kind = str(d.get("type", "awgn")).lower()
        if kind not in ("awgn", "atn", "radar"):
            raise ValueError(f"unknown channel type {kind!r}")
        return cls(kind=kind, nu=float(d.get("nu", 3.0)), sigma2=float(d.get("sigma2", 5.0)),
                   p=float(d.get("p", 0.05)))

    def to_dict(self) -> dict:
        if self.kind == "awgn":
            return {"type": "awgn"}
        if self.kind == "atn":
            return {"type": "atn", "nu": self.nu}
        return {"type": "radar", "sigma2": self.sigma2, "p": self.p}


def channel_noise(shape, model: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    """Draw one noise realization.

    Draw order is part of the reproducibility contract: AWGN and ATN draw a
    single array of ``shape``; radar draws the background normals, then
    uniforms for the burst mask, then the burst normals.
    """
    if isinstance(model, AWGN):
        return model.sigma * rng.standard_normal(shape)
    if isinstance(model, ATN):
        return model.sigma * rng.standard_t(model.nu, size=shape)
    if isinstance(model, Radar):
        g = rng.standard_normal(shape)
        burst = rng.random(shape) < model.p
        g2 = rng.standard_normal(shape)
        return model.sigma1 * g + np.where(burst, model.sigma2 * g2, 0.0)
    raise TypeError(f"not a channel model: {model!r}")


def apply_channel(symbols, model: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    """``y = x + noise``; ``symbols`` may hold the three streams stacked."""
    x = np.asarray(symbols, dtype=np.float64)
    return x + channel_noise(x.shape, model, rng)


@dataclass(frozen=True)
class ReceivedBlock:
    """Noisy observations of (x1, x2, x3). Arrays share one shape ``(..., L)``."""

    y1: np.ndarray
    y2: np.ndarray
    y3: np.ndarray

    def __post_init__(self):
        if not (np.shape(self.y1) == np.shape(self.y2) == np.shape(self.y3)):
            raise ValueError("received streams must have equal shapes")

    @classmethod
    def from_stacked(cls, y) -> "ReceivedBlock":
        y = np.asarray(y, dtype=np.float64)
        return cls(y[..., 0, :], y[..., 1, :], y[..., 2, :])

    @property
    def block_length(self) -> int:
        return np.shape(self.y1)[-1]


def transmit(codeword, model: ChannelModel, rng: np.random.Generator) -> ReceivedBlock:
    """Modulate a codeword's three streams and pass them through ``model``."""
    return ReceivedBlock.from_stacked(apply_channel(modulate(codeword.stacked()), model, rng))
