"""
Encoding turbo codewords
========================

A rate-1/3 turbo code sends three streams: the message itself, the parity of
a recursive systematic convolutional (RSC) encoder, and the parity of a second
copy of that encoder fed with an interleaved message.
"""

import numpy as np

from turbokit import TURBO_757, TURBO_LTE, build_trellis, make_permutation, rsc_encode, turbo_encode

# The impulse response of an RSC encoder never dies out: the feedback keeps
# the register cycling. For the (7, 5) code it settles into a period of 3.
print("757 impulse:", rsc_encode([1, 0, 0, 0, 0, 0, 0, 0, 0], TURBO_757))
print("LTE impulse:", rsc_encode([1, 0, 0, 0, 0, 0, 0, 0, 0], TURBO_LTE))

# Trellis tables are what the decoders walk over.
t = build_trellis(TURBO_LTE)
print("LTE states:", t.num_states)
print("next_state[s, u]:\n", t.next_state)

# The interleaver is a fixed, seeded permutation. Same seed, same permutation.
perm = make_permutation(10, seed=0)
print("permutation:", perm.forward)

msg = np.array([1, 0, 1, 1, 0, 0, 1, 0, 0, 1])
cw = turbo_encode(msg, TURBO_757, perm)
for name in ("x1", "x2", "x3"):
    print(name, getattr(cw, name))

# Codes are linear over GF(2): the codeword of a XOR b is the XOR of codewords.
rng = np.random.default_rng(1)
a, b = rng.integers(0, 2, size=(2, 10))
lhs = turbo_encode(a ^ b, TURBO_757, perm).stacked()
rhs = turbo_encode(a, TURBO_757, perm).stacked() ^ turbo_encode(b, TURBO_757, perm).stacked()
print("linear:", np.array_equal(lhs, rhs))
