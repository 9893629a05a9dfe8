"""
Channel models
==============

Three noise families, each parameterized from an SNR in dB with
``sigma = 10 ** (-snr / 20)``.
"""

import numpy as np

from turbokit import ChannelTemplate, channel_noise, snr_to_sigma, uncoded_bpsk_ber

rng = np.random.default_rng(0)
n = 200_000

for kind in ("awgn", "atn", "radar"):
    model = ChannelTemplate(kind).at_snr(0.0)
    noise = channel_noise((n,), model, rng)
    # ATN is scaled to match the AWGN variance; radar adds rare, large bursts
    print(f"{kind:6s} {model}  var={noise.var():.3f}  "
          f"P(|n|>3)={np.mean(np.abs(noise) > 3):.4f}")

print("sigma at -1.5 dB:", snr_to_sigma(-1.5))

# Hard decisions on clean BPSK symbols give the uncoded reference curve.
for snr in (-1.5, 0.0, 1.5, 3.0):
    x = rng.integers(0, 2, size=n)
    y = 2.0 * x - 1 + snr_to_sigma(snr) * rng.standard_normal(n)
    print(f"{snr:5.1f} dB  simulated {np.mean((y > 0) != x):.4f}  theory {uncoded_bpsk_ber(snr):.4f}")
