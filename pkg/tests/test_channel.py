import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turbokit.channel import (ATN, AWGN, ChannelTemplate, Radar, ReceivedBlock, apply_channel, channel_from_dict,
                              channel_noise, demodulate, modulate, sigma_to_snr, snr_to_sigma, transmit)
from turbokit.code import TURBO_757, make_permutation, turbo_encode


def test_bpsk_mapping():
    assert modulate([0, 1, 1]).tolist() == [-1.0, 1.0, 1.0]
    assert demodulate([-0.2, 0.3, -3.0, 1.0]).tolist() == [0, 1, 0, 1]


def test_snr_frozen_values():
    assert snr_to_sigma(0.0) == 1.0
    assert snr_to_sigma(-1.5) == pytest.approx(1.1885022274370185, rel=1e-12)
    assert snr_to_sigma(20 * math.log10(2)) == pytest.approx(0.5, rel=1e-12)


@given(st.floats(-30, 30))
def test_snr_round_trip(snr):
    assert sigma_to_snr(snr_to_sigma(snr)) == pytest.approx(snr, abs=1e-9)


def test_awgn_statistics():
    noise = channel_noise((10**6,), AWGN(0.7), np.random.default_rng(0))
    assert abs(noise.mean()) < 5e-3
    assert noise.std() == pytest.approx(0.7, rel=5e-3)


def test_student_t_variance():
    # T(3) has variance nu / (nu - 2) = 3
    noise = channel_noise((10**6,), ATN(3.0, 1.0), np.random.default_rng(0))
    assert noise.var() == pytest.approx(3.0, rel=0.05)


def test_radar_burst_fraction():
    model = Radar(sigma1=0.0, sigma2=5.0, p=0.05)
    noise = channel_noise((10**6,), model, np.random.default_rng(1))
    assert np.mean(noise != 0) == pytest.approx(0.05, abs=1.5e-3)
    full = channel_noise((10**6,), Radar(1.0, 5.0, 0.05), np.random.default_rng(1))
    assert full.var() == pytest.approx(1.0 + 0.05 * 25.0, rel=0.03)


def test_radar_draw_order():
    rng = np.random.default_rng(5)
    g, u, g2 = rng.standard_normal(7), rng.random(7), rng.standard_normal(7)
    want = 0.5 * g + np.where(u < 0.3, 4.0 * g2, 0.0)
    assert np.array_equal(channel_noise((7,), Radar(0.5, 4.0, 0.3), np.random.default_rng(5)), want)


def test_template_scaling():
    atn = ChannelTemplate("atn", nu=3.0).at_snr(0.0)
    assert atn.decoder_sigma == pytest.approx(1.0)
    radar = ChannelTemplate("radar").at_snr(-1.5)
    assert radar.sigma1 == pytest.approx(snr_to_sigma(-1.5)) and radar.sigma2 == 5.0 and radar.p == 0.05
    assert ChannelTemplate().at_snr(6.0) == AWGN(snr_to_sigma(6.0))
    with pytest.raises(ValueError):
        ChannelTemplate.from_dict({"type": "rayleigh"})


@pytest.mark.parametrize("model", [AWGN(0.3), ATN(4.0, 0.2), Radar(0.1, 2.0, 0.2)])
def test_channel_dict_round_trip(model):
    assert channel_from_dict(model.to_dict()) == model


def test_channel_validation():
    with pytest.raises(ValueError):
        AWGN(-1.0)
    with pytest.raises(ValueError):
        ATN(2.0, 1.0)
    with pytest.raises(ValueError):
        Radar(1.0, 1.0, 1.5)
    with pytest.raises(ValueError):
        channel_from_dict({"type": "atn", "sigma": 1.0})
    with pytest.raises(TypeError):
        channel_noise((2,), "awgn", np.random.default_rng())


def test_zero_noise_is_identity(rng):
    x = modulate(rng.integers(0, 2, size=(4, 9)))
    for model in (AWGN(0.0), Radar(0.0, 0.0, 0.5)):
        assert np.array_equal(apply_channel(x, model, rng), x)


def test_transmit_shapes(rng):
    cw = turbo_encode(rng.integers(0, 2, size=(6, 12)), TURBO_757, make_permutation(12))
    rx = transmit(cw, AWGN(0.0), rng)
    assert rx.block_length == 12 and rx.y1.shape == (6, 12)
    assert np.array_equal(demodulate(rx.y3), cw.x3)
    with pytest.raises(ValueError):
        ReceivedBlock(np.zeros(3), np.zeros(3), np.zeros(4))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["awgn", "atn", "radar"]))
def test_noise_deterministic(seed, kind):
    model = ChannelTemplate(kind).at_snr(0.0)
    a = channel_noise((3, 11), model, np.random.default_rng(seed))
    b = channel_noise((3, 11), model, np.random.default_rng(seed))
    assert np.array_equal(a, b)
