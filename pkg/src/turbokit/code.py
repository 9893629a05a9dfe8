"""Rate-1/3 turbo code: RSC trellis, interleaver and encoder.

All encoders are unterminated (no tail bits). Arrays of bits may carry any
number of leading batch dimensions; the block axis is always the last one.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RscSpec:
    """Recursive systematic convolutional code with transfer function ``f1/f2``.

    Coefficient lists are lowest degree first, so ``1 + x**2`` is ``(1, 0, 1)``.
    ``f1`` is the feedforward (numerator) polynomial and ``f2`` the feedback
    (denominator) polynomial.
    """

    f1: tuple[int, ...]
    f2: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        f1 = tuple(int(c) for c in self.f1)
        f2 = tuple(int(c) for c in self.f2)
        if any(c not in (0, 1) for c in f1 + f2):
            raise ValueError("polynomial coefficients must be 0 or 1")
        # strip high-order zeros so the memory is the true degree
        while len(f1) > 1 and f1[-1] == 0:
            f1 = f1[:-1]
        while len(f2) > 1 and f2[-1] == 0:
            f2 = f2[:-1]
        if not f1 or not f2 or f1[0] != 1 or f2[0] != 1:
            raise ValueError("f1 and f2 must both contain the constant term")
        m = max(len(f1), len(f2)) - 1
        if m < 1:
            raise ValueError("code memory must be at least 1")
        object.__setattr__(self, "f1", f1 + (0,) * (m + 1 - len(f1)))
        object.__setattr__(self, "f2", f2 + (0,) * (m + 1 - len(f2)))

    @property
    def memory(self) -> int:
        return len(self.f1) - 1


TURBO_757 = RscSpec(f1=(1, 0, 1), f2=(1, 1, 1), name="turbo-757")
TURBO_LTE = RscSpec(f1=(1, 0, 1, 1), f2=(1, 1, 0, 1), name="turbo-lte")

_NAMED_SPECS = {"turbo-757": TURBO_757, "turbo-lte": TURBO_LTE}


def get_spec(name: str) -> RscSpec:
    try:
        return _NAMED_SPECS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown code {name!r}; known: {sorted(_NAMED_SPECS)}") from None


@dataclass(frozen=True, eq=False)
class Trellis:
    """State machine of an RSC encoder.

    ``next_state[s, u]`` and ``parity[s, u]`` give the transition for input bit
    ``u`` from state ``s``. Bit ``j`` of a state holds ``a[t-1-j]``, the
    register contents with the most recent value in the least significant bit.
    """

    num_states: int
    next_state: np.ndarray
    parity: np.ndarray
    spec: RscSpec = field(compare=False)


@functools.lru_cache(maxsize=None)
def build_trellis(spec: RscSpec) -> Trellis:
    m = spec.memory
    n = 1 << m
    next_state = np.zeros((n, 2), dtype=np.int64)
    parity = np.zeros((n, 2), dtype=np.int64)
    for s in range(n):
        past = [(s >> j) & 1 for j in range(m)]  # past[j] = a[t-1-j]
        fb = 0
        for j in range(1, m + 1):
            fb ^= spec.f2[j] & past[j - 1]
        for u in (0, 1):
            a = u ^ fb
            p = spec.f1[0] & a
            for j in range(1, m + 1):
                p ^= spec.f1[j] & past[j - 1]
            next_state[s, u] = ((s << 1) | a) & (n - 1)
            parity[s, u] = p
    next_state.setflags(write=False)
    parity.setflags(write=False)
    return Trellis(num_states=n, next_state=next_state, parity=parity, spec=spec)


def _as_bits(msg) -> np.ndarray:
    bits = np.asarray(msg)
    if bits.ndim == 0 or bits.shape[-1] == 0:
        raise ValueError("message must be a nonempty bit sequence")
    if not np.all((bits == 0) | (bits == 1)):
        raise ValueError("message entries must be 0 or 1")
    return bits.astype(np.int8)


def rsc_encode(msg, spec: RscSpec | Trellis) -> np.ndarray:
    """Parity stream of the RSC encoder started from the all-zero state."""
    trellis = spec if isinstance(spec, Trellis) else build_trellis(spec)
    bits = _as_bits(msg)
    state = np.zeros(bits.shape[:-1], dtype=np.int64)
    out = np.empty(bits.shape, dtype=np.int8)
    for t in range(bits.shape[-1]):
        u = bits[..., t]
        out[..., t] = trellis.parity[state, u]
        state = trellis.next_state[state, u]
    return out


@dataclass(frozen=True)
class Permutation:
    """Interleaver. ``interleave(x)[i] == x[forward[i]]``."""

    forward: np.ndarray
    inverse: np.ndarray

    def __len__(self) -> int:
        return len(self.forward)

    @classmethod
    def from_forward(cls, forward) -> "Permutation":
        fwd = np.asarray(forward, dtype=np.int64)
        L = len(fwd)
        if fwd.ndim != 1 or L == 0 or not np.array_equal(np.sort(fwd), np.arange(L)):
            raise ValueError("forward map is not a permutation of 0..L-1")
        inv = np.empty_like(fwd)
        inv[fwd] = np.arange(L)
        fwd.setflags(write=False)
        inv.setflags(write=False)
        return cls(forward=fwd, inverse=inv)


def _bounded(bitgen: np.random.PCG64, bound: int) -> int:
    """Uniform integer in [0, bound) by rejection on raw 64-bit words."""
    limit = (1 << 64) - ((1 << 64) % bound)
    while True:
        r = int(bitgen.random_raw())
        if r < limit:
            return r % bound


def make_permutation(L: int, kind: str = "random", seed: int | None = 0) -> Permutation:
    """Build an interleaver of length ``L``.

    ``kind="identity"`` gives ``i -> i``. ``kind="random"`` is a Fisher-Yates
    shuffle driven by ``numpy.random.PCG64(seed)`` raw 64-bit outputs: starting
    from ``[0, 1, ..., L-1]``, for ``i = L-1`` down to ``1`` draw
    ``j`` uniformly in ``[0, i]`` (rejection of words ``>= 2**64 - 2**64 % (i+1)``,
    then ``word % (i+1)``) and swap entries ``i`` and ``j``. Only the bit
    generator's raw stream is used, which numpy keeps stable across releases.
    """
    if int(L) <= 0:
        raise ValueError("interleaver length must be positive")
    L = int(L)
    if kind == "identity":
        return Permutation.from_forward(np.arange(L))
    if kind != "random":
        raise ValueError(f"unknown permutation kind {kind!r}")
    bitgen = np.random.PCG64(seed)
    perm = list(range(L))
    for i in range(L - 1, 0, -1):
        j = _bounded(bitgen, i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return Permutation.from_forward(perm)


def _check_len(x: np.ndarray, perm: Permutation, axis: int):
    if x.shape[axis] != len(perm):
        raise ValueError(f"length {x.shape[axis]} does not match interleaver length {len(perm)}")


def interleave(x, perm: Permutation, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    _check_len(x, perm, axis)
    return np.take(x, perm.forward, axis=axis)


def deinterleave(x, perm: Permutation, axis: int = -1) -> np.ndarray:
    x = np.asarray(x)
    _check_len(x, perm, axis)
    return np.take(x, perm.inverse, axis=axis)


@dataclass(frozen=True)
class Codeword:
    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    def stacked(self) -> np.ndarray:
        """Streams stacked on a new axis just before the block axis."""
        return np.stack([self.x1, self.x2, self.x3], axis=-2)


def turbo_encode(msg, spec: RscSpec | Trellis, perm: Permutation) -> Codeword:
    """Systematic stream, parity of ``msg`` and parity of the interleaved ``msg``."""
    bits = _as_bits(msg)
    _check_len(bits, perm, -1)
    trellis = spec if isinstance(spec, Trellis) else build_trellis(spec)
    return Codeword(
        x1=bits.copy(),
        x2=rsc_encode(bits, trellis),
        x3=rsc_encode(interleave(bits, perm), trellis),
    )
