"""
Looking inside: probes and BCJR imitation
=========================================

A linear probe trained on a frozen model's posterior after iteration ``i``
shows how decodable the message already is at that point. Separately, a
width-1 SISO network can be pretrained to mimic the BCJR algorithm.
"""

import numpy as np

from turbokit import TURBO_757, ModelConfig, SisoNet, build_model, train, TrainConfig
from turbokit.training import (DESK_MODEL, DESK_PRESET, PretrainConfig, ProbeConfig, auxiliary_probe,
                               bcjr_imitation_pretrain, derived_rng, imitation_samples, sign_agreement)

model = build_model(ModelConfig.preset("deepturbo", **DESK_MODEL), seed=0)
model, _ = train(model, TrainConfig(**DESK_PRESET, seed=0))
for i in range(1, model.cfg.iterations + 1):
    _, ber = auxiliary_probe(model, i, ProbeConfig(steps=200))
    print(f"probe after iteration {i}: BER {ber:.4f}")

cfg = ModelConfig.preset("neural_bcjr", hidden=25, block_length=20)
held_out = imitation_samples(2000, PretrainConfig(), TURBO_757, 0.0, derived_rng(7))
net = SisoNet(cfg, np.random.default_rng(0))
print("sign agreement before:", sign_agreement(net, *held_out))
bcjr_imitation_pretrain(net, TURBO_757, snr_db=0.0)
print("sign agreement after: ", sign_agreement(net, *held_out))
