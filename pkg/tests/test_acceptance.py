"""Gated acceptance checks; each prints one PASS/FAIL line in the terminal summary."""

import os
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from turbokit.channel import ChannelTemplate, ReceivedBlock, snr_to_sigma
from turbokit.classical import ClassicalTurboDecoder, bcjr_siso, rsc_map_oracle
from turbokit.code import TURBO_757, TURBO_LTE, build_trellis, make_permutation, rsc_encode, turbo_encode
from turbokit.deepturbo import ModelConfig, NeuralTurboDecoder, SisoNet, build_model, checkpoint_bytes
from turbokit.harness import EvalConfig, evaluate, records_to_csv, uncoded_bpsk_ber, write_results
from turbokit.nn import sigmoid
from turbokit.training import (PretrainConfig, TrainConfig, bcjr_imitation_pretrain, derived_rng,
                               imitation_samples, sign_agreement, train, trained_ber)
from turbokit.verify import TOL, run_gradient_suite


def shift_register(msg, f1, f2):
    m = len(f1) - 1
    reg = [0] * m
    out = []
    for u in msg:
        a = u
        for j in range(1, m + 1):
            a ^= f2[j] & reg[j - 1]
        p = f1[0] & a
        for j in range(1, m + 1):
            p ^= f1[j] & reg[j - 1]
        out.append(p)
        reg = [a] + reg[:-1]
    return out


def test_c1_map_oracle_equivalence(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for spec in (TURBO_757, TURBO_LTE):
        trellis = build_trellis(spec)
        for L in (4, 8, 10):
            sigma = snr_to_sigma(0.0)
            u = rng.integers(0, 2, size=(100, L))
            ys = 2.0 * u - 1 + sigma * rng.standard_normal((100, L))
            yp = 2.0 * rsc_encode(u, trellis) - 1 + sigma * rng.standard_normal((100, L))
            prior = rng.normal(0, 2, size=(100, L))
            got = bcjr_siso(ys, yp, prior, trellis, sigma, llr_clip=None)
            want = rsc_map_oracle(ys, yp, prior, spec, sigma)
            worst = max(worst, float(np.max(np.abs(got - want))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 60
    criterion(1, "MAP-oracle equivalence", ok, f"max|d|={worst:.2e} t={elapsed:.1f}s")
    assert ok


def test_c2_encoder_correctness(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    linear = True
    for spec in (TURBO_757, TURBO_LTE):
        perm = make_permutation(40, seed=5)
        a, b = rng.integers(0, 2, size=(2, 1000, 40))
        ca, cb, cab = (turbo_encode(m, spec, perm).stacked() for m in (a, b, a ^ b))
        linear &= bool(np.array_equal(cab, ca ^ cb))
    imp757 = rsc_encode([1, 0, 0, 0, 0, 0], TURBO_757).tolist()
    lte_ref = shift_register([1, 0, 0, 0, 0, 0], TURBO_LTE.f1, TURBO_LTE.f2)
    imp_lte = rsc_encode([1, 0, 0, 0, 0, 0], TURBO_LTE).tolist()
    elapsed = time.perf_counter() - t0
    ok = linear and imp757 == [1, 1, 1, 0, 1, 1] and imp_lte == lte_ref and elapsed < 1
    criterion(2, "encoder linearity and impulse responses", ok,
              f"757={imp757} lte={imp_lte} t={elapsed:.2f}s")
    assert ok


def test_c3_gradient_suite(criterion):
    t0 = time.perf_counter()
    with threadpool_limits(1):
        results = run_gradient_suite(seed=0, n_samples=None)
    elapsed = time.perf_counter() - t0
    worst_name, worst = max(results, key=lambda r: r[1])
    names = {n for n, _ in results}
    ok = worst < TOL and elapsed < 120 and names >= {
        "gru", "bigru", "bigru_2layer", "conv1d_same_k5", "decode_head_bce", "bce", "max_bce", "siso_bigru"}
    criterion(3, "finite-difference gradient suite", ok, f"worst {worst_name}={worst:.2e} t={elapsed:.1f}s")
    assert ok


def test_c4_classical_waterfall(criterion):
    t0 = time.perf_counter()
    cfg = EvalConfig(snr_list=(-1.5, 0.0, 1.5), block_length=100, min_block_errors=10**9, max_blocks=1000)
    recs = evaluate(ClassicalTurboDecoder(TURBO_757, cfg.permutation, iterations=6), cfg)
    bers = [r.ber for r in recs]
    elapsed = time.perf_counter() - t0
    ok = (all(r.num_bits >= 10**5 for r in recs) and bers[0] > bers[1] > bers[2]
          and bers[2] < 1e-3 and elapsed < 600)
    criterion(4, "classical waterfall", ok, f"BER={['%.2e' % b for b in bers]} t={elapsed:.1f}s")
    assert ok


def test_c5_iteration_benefit(criterion):
    cfg = EvalConfig(snr_list=(0.0,), block_length=100, min_block_errors=10**9, max_blocks=1000, master_seed=3)
    perm = cfg.permutation
    (r6,) = evaluate(ClassicalTurboDecoder(TURBO_757, perm, iterations=6), cfg)
    (r2,) = evaluate(ClassicalTurboDecoder(TURBO_757, perm, iterations=2), cfg)
    ok = r6.num_bits >= 10**5 and r6.ber <= r2.ber
    criterion(5, "iteration benefit at 0 dB", ok, f"I6={r6.ber:.2e} I2={r2.ber:.2e}")
    assert ok


def test_c6_training_smoke(criterion, desk_trained):
    model, history = desk_trained
    final = history.records[-1].val_loss
    ber = trained_ber(model, 0.0, num_blocks=5000, seed=99)
    uncoded = uncoded_bpsk_ber(0.0)
    ok = final < 0.95 * history.initial_val_loss and ber < uncoded
    criterion(6, "desk training smoke", ok,
              f"val {history.initial_val_loss:.4f}->{final:.4f} BER@0dB={ber:.4f} uncoded={uncoded:.4f}")
    assert abs(uncoded - 0.15865525393145707) < 1e-12
    assert ok


def test_c7_residual_identity(criterion):
    cfg = ModelConfig.preset("deepturbo", iterations=3, hidden=6, block_length=12)
    model = build_model(cfg, seed=4)
    for net in model.sisos:
        for p in net.params.values():
            p[...] = 0.0
    model.head.params["b"][...] = 0.37
    rng = np.random.default_rng(7)
    rx = ReceivedBlock.from_stacked(rng.normal(size=(5, 3, 12)))
    logits, posts, _ = model.forward(rx)
    zero = all(np.all(p == 0.0) for p in posts)
    const = np.all(sigmoid(logits) == sigmoid(np.float64(0.37)))
    ok = bool(zero and const)
    criterion(7, "residual identity", ok, f"posteriors zero={zero} constant output={bool(const)}")
    assert ok


def test_c8_imitation_pretraining(criterion):
    cfg = ModelConfig.preset("neural_bcjr", hidden=25, block_length=20)
    pcfg = PretrainConfig()
    ev = imitation_samples(2000, pcfg, TURBO_757, 0.0, derived_rng(777))
    net = bcjr_imitation_pretrain(SisoNet(cfg, np.random.default_rng(0)), TURBO_757, 0.0, seed=0, cfg=pcfg)
    trained = sign_agreement(net, *ev)
    untrained = float(np.mean([sign_agreement(SisoNet(cfg, np.random.default_rng(s)), *ev) for s in range(10)]))
    ok = trained >= 0.90 and 0.4 <= untrained <= 0.6
    criterion(8, "BCJR imitation pretraining", ok, f"agreement={trained:.3f} untrained mean={untrained:.3f}")
    assert ok


def _tiny_run(tmp, tag):
    with threadpool_limits(1):
        model = build_model(ModelConfig.preset("deepturbo", iterations=2, hidden=6, block_length=10), seed=11)
        model, hist = train(model, TrainConfig(block_length=10, batch_size=16, batches_per_epoch=3, epochs=2,
                                               lr=1e-2, validation_size=200, seed=5))
        cfg = EvalConfig(snr_list=(0.0, 1.0), block_length=10, min_block_errors=30, max_blocks=2000)
        path = write_results(evaluate(NeuralTurboDecoder(model), cfg), tmp / f"res_{tag}.csv")
    return checkpoint_bytes(model), path.read_bytes()


def test_c9_reproducibility(criterion, tmp_path):
    ck_a, res_a = _tiny_run(tmp_path, "a")
    ck_b, res_b = _tiny_run(tmp_path, "b")
    cfg = EvalConfig(snr_list=(0.0,), block_length=40, min_block_errors=25, max_blocks=3000, chunk_blocks=50)
    dec = ClassicalTurboDecoder(TURBO_757, cfg.permutation, iterations=2)
    base = records_to_csv(evaluate(dec, cfg))
    parallel = records_to_csv(evaluate(dec, EvalConfig(**{**cfg.__dict__, "workers": 2})))
    ok = ck_a == ck_b and res_a == res_b and base == parallel
    criterion(9, "reproducibility", ok,
              f"checkpoint={ck_a == ck_b} results={res_a == res_b} workers-invariant={base == parallel}")
    assert ok


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("TURBOKIT_LONG") != "1", reason="long suite; set TURBOKIT_LONG=1")
def test_c10_long_direction_checks(criterion):
    from turbokit.channel import Radar
    from turbokit.training import FULL_MODEL, FULL_PRESET
    model = build_model(ModelConfig.preset("deepturbo", **FULL_MODEL), seed=0)
    model, _ = train(model, TrainConfig(**FULL_PRESET, seed=0))
    cfg = EvalConfig(snr_list=(2.0,), block_length=100, min_block_errors=100, max_blocks=100000)
    (neural,) = evaluate(NeuralTurboDecoder(model), cfg)
    (turbo,) = evaluate(ClassicalTurboDecoder(TURBO_757, cfg.permutation, iterations=6), cfg)
    radar = ChannelTemplate("radar")
    rmodel = build_model(ModelConfig.preset("deepturbo", **FULL_MODEL), seed=0)
    rmodel, _ = train(rmodel, TrainConfig(**FULL_PRESET, seed=0, channel=radar))
    rcfg = EvalConfig(snr_list=(2.0,), block_length=100, channel=radar, min_block_errors=100, max_blocks=100000)
    (rn,) = evaluate(NeuralTurboDecoder(rmodel), rcfg)
    (rt,) = evaluate(ClassicalTurboDecoder(TURBO_757, rcfg.permutation, iterations=6), rcfg)
    ok = neural.ber <= turbo.ber and rn.ber < rt.ber
    criterion(10, "long-suite direction checks", ok,
              f"awgn {neural.ber:.2e} vs {turbo.ber:.2e}; radar {rn.ber:.2e} vs {rt.ber:.2e}")
    assert ok
