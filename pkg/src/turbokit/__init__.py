"""Turbo-code toolkit: classical BCJR turbo decoding, DeepTurbo neural decoders,
channel models and a Monte-Carlo BER/BLER harness."""

from .channel import (ATN, AWGN, ChannelTemplate, Radar, ReceivedBlock, apply_channel, channel_noise, modulate,
                      sigma_to_snr, snr_to_sigma, transmit)
from .classical import (ClassicalTurboDecoder, TurboDecodeConfig, bcjr_siso, map_oracle, rsc_map_oracle,
                        turbo_decode)
from .code import (TURBO_757, TURBO_LTE, Permutation, RscSpec, build_trellis, deinterleave, interleave,
                   make_permutation, rsc_encode, turbo_encode)
from .deepturbo import (DeepTurboModel, ModelConfig, NeuralTurboDecoder, SisoNet, build_model, deepturbo_decode,
                        load_checkpoint, save_checkpoint)
from .harness import BerRecord, EvalConfig, evaluate, read_results, uncoded_bpsk_ber, write_results
from .training import TrainConfig, auxiliary_probe, bcjr_imitation_pretrain, train, transfer_retrain

__version__ = "0.1.0"
