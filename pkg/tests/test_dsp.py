import types

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scene_ensemble import dsp
from tests.oracles import (
    bilinear_pixel_loop, brute_dct2_ortho, brute_mfcc_frame, hann, naive_dft_power,
)

CFG = dsp.DspConfig()


def segment(channels, rate=16000):
    return types.SimpleNamespace(channels=channels, sample_rate=rate)


class TestConfig:
    def test_full_preset_defaults(self):
        assert (CFG.frame_length, CFG.hop_length, CFG.image_size, CFG.mfcc_count) == (2048, 512, 64, 20)
        assert CFG.fmax == 8000

    @pytest.mark.parametrize("kw", [
        {"frame_length": 0}, {"hop_length": 0}, {"hop_length": 4096}, {"mfcc_count": 41},
        {"fmin": 9000.0}, {"fmax": 9000.0}, {"image_size": 0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            dsp.DspConfig(**kw)


class TestFraming:
    def test_ten_seconds(self):
        assert dsp.frame_signal(np.zeros(160000), CFG).shape == (309, 2048)

    def test_single_frame(self):
        assert dsp.frame_signal(np.ones(2048), CFG).shape == (1, 2048)

    def test_zero_signal(self):
        assert not dsp.frame_signal(np.zeros(5000), CFG).any()

    def test_too_short(self):
        with pytest.raises(dsp.SignalTooShortError, match="signal too short"):
            dsp.frame_signal(np.zeros(2047), CFG)

    def test_frame_start_and_window(self):
        x = np.arange(3000, dtype=float)
        frames = dsp.frame_signal(x, CFG)
        np.testing.assert_array_equal(frames[1], x[512:512 + 2048] * hann(2048))

    @settings(max_examples=60, deadline=None)
    @given(L=st.integers(1, 64), data=st.data())
    def test_frame_count_formula(self, L, data):
        H = data.draw(st.integers(1, L))
        n = data.draw(st.integers(L, 400))
        cfg = dsp.DspConfig(frame_length=L, hop_length=H, n_mels=1, mfcc_count=1)
        frames = dsp.frame_signal(np.ones(n), cfg)
        assert frames.shape == ((n - L) // H + 1, L)


class TestPowerSpectrogram:
    def test_zero(self):
        assert not dsp.power_spectrogram(np.zeros((3, 64))).any()

    def test_sine_at_bin_matches_naive_dft(self):
        L, k0 = 256, 17
        frame = np.sin(2 * np.pi * k0 * np.arange(L) / L) * hann(L)
        p = dsp.power_spectrogram(frame[None])[0]
        assert p.argmax() == k0
        np.testing.assert_allclose(p, naive_dft_power(frame), rtol=1e-6, atol=1e-9 * p.max())

    def test_columns(self):
        assert dsp.power_spectrogram(np.ones((2, 2048))).shape == (2, 1025)

    def test_parseval(self, rng):
        L = 512
        frame = rng.standard_normal(L) * hann(L)
        p = dsp.power_spectrogram(frame[None])[0]
        w = np.full(L // 2 + 1, 2.0)
        w[0] = w[-1] = 1.0
        np.testing.assert_allclose((w * p).sum() / L, (frame ** 2).sum(), rtol=1e-6)


class TestDb:
    def test_values(self):
        np.testing.assert_allclose(dsp.power_to_db(np.array([1.0, 0.01]), -80), [0.0, -20.0], atol=1e-8)
        assert dsp.power_to_db(np.array([0.0]), -80)[0] == -80

    def test_floor(self):
        assert dsp.power_to_db(np.array([1e-20, 1e-3]), -50).min() == -50


class TestImage:
    def test_constant(self):
        assert not dsp.spectrogram_image(np.full((100, 80), -12.0)).any()

    def test_identity_resize(self, rng):
        m = rng.standard_normal((64, 64))
        img = dsp.spectrogram_image(m)
        np.testing.assert_allclose(img, (m - m.min()) / (m.max() - m.min()), atol=1e-12)

    def test_ramp_against_loop_oracle(self):
        rows, cols = np.meshgrid(np.arange(128.0), np.arange(618.0), indexing="ij")
        m = rows * 0.7 - cols * 0.05 + np.sin(cols / 9.0)
        np.testing.assert_allclose(dsp.bilinear_resize(m, 64, 64), bilinear_pixel_loop(m, 64, 64), atol=1e-6)

    def test_range(self, rng):
        img = dsp.spectrogram_image(rng.standard_normal((30, 200)) * 40)
        assert img.shape == (64, 64) and img.min() == 0.0 and img.max() == 1.0

    def test_empty(self):
        with pytest.raises(ValueError):
            dsp.spectrogram_image(np.zeros((0, 4)))


class TestMel:
    def test_mel_700(self):
        assert dsp.hz_to_mel(700.0) == pytest.approx(781.1728387, abs=1e-6)
        assert dsp.mel_to_hz(dsp.hz_to_mel(1234.5)) == pytest.approx(1234.5)

    def test_filters_nonnegative_and_nonempty(self):
        fb = dsp.mel_filterbank(CFG)
        assert fb.shape == (40, 1025)
        assert (fb >= 0).all() and (fb > 0).any(axis=1).all()

    def test_centres_increase_and_overlap(self):
        centres = dsp.mel_band_edges(CFG)[1:-1]
        assert (np.diff(centres) > 0).all()
        fb = dsp.mel_filterbank(CFG)
        assert all(((fb[m] > 0) & (fb[m + 1] > 0)).any() for m in range(39))

    def test_too_many_bands(self):
        with pytest.raises(dsp.FilterbankError):
            dsp.mel_filterbank(dsp.DspConfig(frame_length=64, hop_length=32, n_mels=60, mfcc_count=20))


class TestMfcc:
    def test_zero_spectrum(self):
        fb = dsp.mel_filterbank(CFG)
        c = dsp.mfcc(np.zeros((2, 1025)), fb, 20)
        np.testing.assert_allclose(c[:, 0], np.log(1e-10) * np.sqrt(40), rtol=1e-12)
        np.testing.assert_allclose(c[:, 1:], 0, atol=1e-9)

    def test_dct_matches_brute(self, rng):
        x = rng.standard_normal(40)
        np.testing.assert_allclose(dsp.dct2_ortho(x), brute_dct2_ortho(x), atol=1e-12)

    def test_random_frame_matches_brute_force(self, rng):
        fb = dsp.mel_filterbank(CFG)
        p = rng.random(1025) * 5
        got = dsp.mfcc(p[None], fb, 20)[0]
        np.testing.assert_allclose(got, brute_mfcc_frame(p, fb, 20), rtol=1e-6, atol=1e-9)

    def test_twenty_columns(self):
        fb = dsp.mel_filterbank(CFG)
        assert dsp.mfcc(np.ones((7, 1025)), fb, 20).shape == (7, 20)

    def test_bin_mismatch(self):
        with pytest.raises(ValueError):
            dsp.mfcc(np.ones((2, 100)), dsp.mel_filterbank(CFG), 20)


class TestExtract:
    def test_four_channels(self, rng):
        x = rng.standard_normal(160000) * 0.1
        feats = dsp.extract_features(segment([x, x * 0.5, x, -x]), CFG)
        assert len(feats) == 4
        assert feats[0][0].shape == (64, 64)
        assert feats[0][1].shape == (309, 20)

    def test_identical_channels(self, rng):
        x = rng.standard_normal(20000)
        (a, b), (c, d) = dsp.extract_features(segment([x, x.copy()]), CFG)
        assert np.array_equal(a, c) and np.array_equal(b, d)

    def test_deterministic(self, rng):
        x = rng.standard_normal(20000)
        f1 = dsp.extract_features(segment([x]), CFG)
        f2 = dsp.extract_features(segment([x]), CFG)
        assert all(np.array_equal(u, v) for p, q in zip(f1, f2) for u, v in zip(p, q))

    def test_rate_mismatch(self):
        with pytest.raises(ValueError, match="sample rate"):
            dsp.extract_features(segment([np.zeros(4000)], rate=8000), CFG)

    def test_no_channels(self):
        with pytest.raises(ValueError):
            dsp.extract_features(segment([]), CFG)
