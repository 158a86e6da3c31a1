import numpy as np
import pytest
from pytest import approx

from breathfair.dsp_features import (DegenerateFilter, DspConfig, MfccMatrix,
                                     frame_count, hann_window, hz_to_mel,
                                     mel_edge_frequencies, mel_filterbank,
                                     mel_to_hz, mfcc, power_spectrogram,
                                     summarize)

SR = 22050
CFG = DspConfig()


def test_zero_signal_zero_spectrogram():
    spec = power_spectrogram(np.zeros(4096), CFG)
    assert spec.shape == (1025, 1 + 4096 // 512)
    assert np.all(spec == 0.0)


def test_constant_signal_energy_in_dc_mainlobe():
    spec = power_spectrogram(np.full(8192, 0.7), CFG)
    sums = spec.sum(axis=0)
    # exact DFT of a periodic Hann window has power only in bins 0 and 1,
    # with bin 0 carrying 0.8 of the one-sided total
    assert np.all(np.argmax(spec, axis=0) == 0)
    assert np.all(spec[0] / sums >= 0.79)
    assert np.all((spec[0] + spec[1]) / sums >= 0.999)


def test_sine_argmax_bin():
    t = np.arange(SR) / SR
    spec = power_spectrogram(np.sin(2 * np.pi * 1000.0 * t), CFG)
    argmax = np.argmax(spec, axis=0)
    expected = round(1000 * 2048 / SR)
    assert expected == 93
    # frames whose window lies fully inside the signal
    assert np.all(argmax[2:-2] == expected)
    # boundary frames see the reflection cusp; stay within one bin
    assert np.all(np.abs(argmax - expected) <= 1)


def test_parseval_per_frame():
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, 6000)
    spec = power_spectrogram(x, CFG)
    pad = CFG.frame_length // 2
    padded = np.pad(x, pad, mode="reflect")
    window = hann_window(CFG.frame_length)
    for t in (3, 5, 8):
        frame = padded[t * CFG.hop_length:t * CFG.hop_length + CFG.frame_length] * window
        full_sum = spec[0, t] + spec[-1, t] + 2.0 * spec[1:-1, t].sum()
        assert full_sum == approx(CFG.frame_length * np.sum(frame ** 2), rel=1e-6)


def test_mel_scale_anchor_points():
    assert hz_to_mel(0.0) == 0.0
    assert hz_to_mel(1000.0) == approx(15.0)
    assert mel_to_hz(15.0) == approx(1000.0)
    assert mel_to_hz(hz_to_mel(3700.0)) == approx(3700.0, rel=1e-12)


def test_filterbank_shape_and_support():
    fb = mel_filterbank(CFG, SR)
    assert fb.shape == (128, 1025)
    assert np.all(fb >= 0.0)
    assert np.all(fb.sum(axis=1) > 0.0)


def test_filterbank_peaks_at_one_without_normalization():
    edges = mel_edge_frequencies(CFG.n_mels, CFG.fmin, SR / 2)
    centres = edges[1:-1]
    fb = mel_filterbank(CFG, SR, freqs=centres, normalize=False)
    assert np.diag(fb) == approx(np.ones(CFG.n_mels), abs=1e-12)


def test_degenerate_filter_raises():
    with pytest.raises(DegenerateFilter):
        mel_filterbank(DspConfig(n_mels=1024, n_mfcc=40), SR)


def test_silence_mfcc_analytic_value():
    m = mfcc(np.zeros(2 * SR), SR, CFG)
    assert m.coefficients.shape == (40, frame_count(2 * SR, 512))
    assert np.allclose(m.coefficients[0], -100.0 * np.sqrt(128.0), atol=1e-9)
    assert np.allclose(m.coefficients[1:], 0.0, atol=1e-9)


def test_mfcc_shape_rule():
    rng = np.random.default_rng(2)
    for n in (500, 44100, 30011):
        m = mfcc(rng.uniform(-1, 1, n), SR, CFG)
        assert m.coefficients.shape == (40, 1 + n // 512)
        assert np.all(np.isfinite(m.coefficients))


def test_gain_invariance_shifts_only_dc_coefficient():
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.4, 0.4, SR)
    base = mfcc(x, SR, CFG).coefficients
    scaled = mfcc(2.0 * x, SR, CFG).coefficients
    shift = 10.0 * np.log10(4.0) * np.sqrt(128.0)
    assert scaled[0] == approx(base[0] + shift, abs=1e-8)
    assert np.allclose(scaled[1:], base[1:], atol=1e-8)


def test_mfcc_deterministic():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, 8000)
    a = mfcc(x, SR, CFG).coefficients
    b = mfcc(x, SR, CFG).coefficients
    assert np.array_equal(a, b)


def test_mfcc_matches_frozen_reference_fixtures(fixtures_dir):
    data = np.load(fixtures_dir / "mfcc_oracle.npz")
    names = sorted(k[len("input_"):] for k in data.files if k.startswith("input_"))
    assert len(names) == 10
    for name in names:
        got = mfcc(data[f"input_{name}"], SR, CFG).coefficients
        expected = data[f"mfcc_{name}"]
        denom = max(np.linalg.norm(expected), 1e-30)
        assert np.linalg.norm(got - expected) / denom < 1e-4, name


def test_summarize_single_frame_identity():
    m = MfccMatrix(np.arange(40.0).reshape(40, 1), CFG, SR)
    assert np.array_equal(summarize(m), np.arange(40.0))


def test_summarize_opposite_frames_cancel():
    v = np.linspace(-1, 1, 40).reshape(40, 1)
    m = MfccMatrix(np.hstack([v, -v]), CFG, SR)
    assert summarize(m) == approx(np.zeros(40), abs=1e-15)


def test_summarize_mean():
    rows = np.tile(np.array([[1.0, 2.0, 3.0]]), (40, 1))
    m = MfccMatrix(rows, CFG, SR)
    assert summarize(m) == approx(np.full(40, 2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        DspConfig(hop_length=0)
    with pytest.raises(ValueError):
        DspConfig(n_mfcc=256, n_mels=128)
    with pytest.raises(ValueError):
        DspConfig(fmax=90000.0).resolved_fmax(SR)
