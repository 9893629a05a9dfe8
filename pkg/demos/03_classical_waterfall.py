"""
Classical turbo decoding
========================

Log-MAP BCJR stages exchange extrinsic LLRs through the interleaver. More
iterations push the BER curve down; the curve falls steeply with SNR.
"""

from turbokit import TURBO_757, ClassicalTurboDecoder, EvalConfig, evaluate, uncoded_bpsk_ber

cfg = EvalConfig(snr_list=(-1.5, 0.0, 1.5), block_length=100, min_block_errors=50, max_blocks=2000)
perm = cfg.permutation

for iterations in (1, 2, 6):
    dec = ClassicalTurboDecoder(TURBO_757, perm, iterations=iterations)
    for r in evaluate(dec, cfg):
        print(f"{r.decoder_id:9s} {r.snr_db:5.1f} dB  BER {r.ber:.2e}  BLER {r.bler:.3f}  "
              f"({r.num_blocks} blocks, {r.stop_reason})")

print("uncoded at 0 dB:", uncoded_bpsk_ber(0.0))
