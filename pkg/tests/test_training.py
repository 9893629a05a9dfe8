import copy

import numpy as np
import pytest

from turbokit.channel import ChannelTemplate
from turbokit.code import TURBO_757, make_permutation
from turbokit.deepturbo import ModelConfig, SisoNet, build_model, checkpoint_bytes
from turbokit.training import (PretrainConfig, ProbeConfig, TrainConfig, TrainHistory, TrainingDiverged,
                               auxiliary_probe, bcjr_imitation_pretrain, derived_rng, gen_batch, train,
                               transfer_retrain)


def tiny_model(L=10, seed=0, **kw):
    return build_model(ModelConfig.preset("deepturbo", iterations=2, hidden=5, block_length=L, **kw), seed=seed)


def tiny_cfg(L=10, **kw):
    base = dict(block_length=L, batch_size=16, batches_per_epoch=2, epochs=2, lr=1e-2, validation_size=100)
    base.update(kw)
    return TrainConfig(**base)


def test_gen_batch_is_codeword_plus_noise():
    perm = make_permutation(12, seed=1)
    msgs, rx = gen_batch(4, 12, 60.0, ChannelTemplate(), TURBO_757, perm, derived_rng(1))
    assert msgs.shape == (4, 12) and np.array_equal(rx.y1 > 0, msgs.astype(bool))
    again, _ = gen_batch(4, 12, 60.0, ChannelTemplate(), TURBO_757, perm, derived_rng(1))
    assert np.array_equal(msgs, again)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(loss="mse")
    with pytest.raises(ValueError):
        TrainConfig(epochs=3, snr_schedule=((0.0, 2), (1.0, 2)))
    with pytest.raises(ValueError):
        TrainConfig(snr_schedule=())
    assert TrainConfig(snr_schedule=[[1, 2], [0, None]]).snr_schedule == ((1.0, 2), (0.0, None))


def test_block_length_mismatch():
    with pytest.raises(ValueError):
        train(tiny_model(L=10), tiny_cfg(L=12))


def test_zero_epochs_is_noop():
    model = tiny_model()
    before = checkpoint_bytes(model)
    _, hist = train(model, tiny_cfg(epochs=0))
    assert hist.records == [] and checkpoint_bytes(model) == before


def test_decay_and_schedule_switch():
    # an unreachable improvement threshold forces a decay after every epoch
    _, hist = train(tiny_model(), tiny_cfg(epochs=3, patience_epochs=1, min_improvement=10.0))
    assert [r.lr for r in hist.records] == pytest.approx([1e-2, 1e-3, 1e-4])
    assert [r.snr_db for r in hist.records] == [0.0, -1.5, -1.5]


def test_fixed_span_schedule():
    _, hist = train(tiny_model(), tiny_cfg(epochs=3, snr_schedule=((2.0, 1), (1.0, None))))
    assert [r.snr_db for r in hist.records] == [2.0, 1.0, 1.0]


def test_history_csv(tmp_path):
    _, hist = train(tiny_model(), tiny_cfg())
    text = hist.write_csv(tmp_path / "h.csv").read_text().splitlines()
    assert text[0] == ",".join(TrainHistory.HEADER) and len(text) == 3
    assert np.isfinite(hist.initial_val_loss)


def test_training_reduces_loss():
    _, hist = train(tiny_model(), tiny_cfg(epochs=4, batches_per_epoch=5))
    assert hist.records[-1].val_loss < hist.initial_val_loss


def test_divergence_is_reported():
    model = tiny_model()
    model.head.params["b"][...] = np.nan
    with pytest.raises(TrainingDiverged):
        train(model, tiny_cfg())


def test_train_deterministic():
    a, _ = train(tiny_model(), tiny_cfg(loss="max_bce"))
    b, _ = train(tiny_model(), tiny_cfg(loss="max_bce"))
    assert checkpoint_bytes(a) == checkpoint_bytes(b)


def test_transfer_retrain_leaves_source_untouched():
    src, _ = train(tiny_model(L=20), tiny_cfg(L=20))
    before = checkpoint_bytes(src)
    moved, hist = transfer_retrain(src, 60, tiny_cfg(L=20, epochs=1))
    assert checkpoint_bytes(src) == before
    assert moved.block_length == 60 and len(moved.permutation) == 60
    assert len(hist.records) == 1
    assert set(moved.state_dict()) == set(src.state_dict())


def test_imitation_requires_width_one():
    with pytest.raises(ValueError):
        bcjr_imitation_pretrain(SisoNet(ModelConfig.preset("deepturbo", hidden=3), np.random.default_rng()),
                                TURBO_757, 0.0)


def test_imitation_improves_fit():
    cfg = ModelConfig.preset("neural_bcjr", hidden=6, block_length=10)
    pcfg = PretrainConfig(block_length=10, num_samples=400, epochs=2, lr=1e-2)
    net = SisoNet(cfg, np.random.default_rng(0))
    start = copy.deepcopy(net)
    bcjr_imitation_pretrain(net, TURBO_757, 0.0, cfg=pcfg)
    assert any(not np.array_equal(a, b) for a, b in zip(net.params.values(), start.params.values()))


def test_probe_on_untrained_model_is_near_chance():
    model = tiny_model(L=10, seed=3)
    cfg = ProbeConfig(train_snr_db=-20.0, eval_snr_db=-20.0, steps=30, eval_blocks=500)
    probe, ber = auxiliary_probe(model, 1, cfg)
    assert abs(ber - 0.5) < 0.05
    assert probe.params["W"].shape == (5, 1)
    with pytest.raises(ValueError):
        auxiliary_probe(model, 3, cfg)


def test_probe_on_trained_model_beats_chance(desk_trained):
    model, _ = desk_trained
    _, ber = auxiliary_probe(model, model.cfg.iterations, ProbeConfig(steps=100, eval_blocks=1000))
    assert ber < 0.3
