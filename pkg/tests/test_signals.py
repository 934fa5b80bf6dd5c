import numpy as np
import pytest

from asyncse.signals import (
    Spectrogram,
    StftConfig,
    TimeSignal,
    istft,
    resample_fractional,
    stft,
)
from conftest import bandlimited_noise, xcorr_lag_subsample

CFG = StftConfig()
FS = 16000


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestTypes:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            TimeSignal(np.array([0.0, np.nan]), FS)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            TimeSignal(np.zeros(10), 0)

    def test_spectrogram_bin_count(self):
        with pytest.raises(ValueError):
            Spectrogram(np.zeros((4, 100), dtype=complex), 512, 256)

    def test_hop_must_be_half_frame(self):
        with pytest.raises(ValueError):
            StftConfig(frame_len=512, hop=128)


class TestStft:
    def test_zero_signal_shape(self):
        spec = stft(TimeSignal(np.zeros(FS), FS), CFG)
        assert spec.data.shape == (61, 257)
        assert np.all(spec.data == 0)

    def test_bin_centered_sinusoid_peaks_at_bin(self):
        k = 20
        t = np.arange(FS)
        x = np.sin(2 * np.pi * k * (FS / 512) * t / FS)
        spec = stft(TimeSignal(x, FS), CFG)
        mags = spec.magnitude()
        # interior frames all peak exactly at bin k
        for frame in mags[1:-1]:
            assert np.argmax(frame) == k

    def test_too_short_signal(self):
        with pytest.raises(ValueError, match="signal too short"):
            stft(TimeSignal(np.zeros(511), FS), CFG)

    def test_linearity(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(4096)
        y = rng.standard_normal(4096)
        sx = stft(TimeSignal(x, FS), CFG).data
        sy = stft(TimeSignal(y, FS), CFG).data
        sxy = stft(TimeSignal(3.0 * x - 0.5 * y, FS), CFG).data
        assert np.allclose(sxy, 3.0 * sx - 0.5 * sy, atol=1e-12)

    def test_parseval_per_frame(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(4096)
        win = CFG.window_array()
        spec = stft(TimeSignal(x, FS), CFG).data
        for t in range(spec.shape[0]):
            frame = x[t * CFG.hop : t * CFG.hop + CFG.frame_len] * win
            te = np.sum(frame**2)
            mags = np.abs(spec[t]) ** 2
            fe = (mags[0] + mags[-1] + 2 * np.sum(mags[1:-1])) / CFG.frame_len
            assert abs(te - fe) / te < 1e-8


class TestIstft:
    def test_zero_spectrogram(self):
        spec = Spectrogram(np.zeros((10, 257), dtype=complex), 512, 256)
        out = istft(spec, CFG)
        assert np.all(out.samples == 0)
        assert len(out) == 9 * 256 + 512

    def test_impulse_roundtrip(self):
        x = np.zeros(2048)
        x[300] = 1.0
        out = istft(stft(TimeSignal(x, FS), CFG), CFG)
        assert abs(out.samples[300] - 1.0) <= 1e-10
        other = np.delete(out.samples, 300)
        assert np.max(np.abs(other)) <= 1e-10

    def test_roundtrip_speech_length(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(5 * FS)
        out = istft(stft(TimeSignal(x, FS), CFG), CFG).samples
        n = len(out)
        sl = slice(CFG.frame_len, n - CFG.frame_len)
        assert rel_err(out[sl], x[sl]) <= 1e-10

    def test_roundtrip_random_one_second(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(FS)
        out = istft(stft(TimeSignal(x, FS), CFG), CFG).samples
        sl = slice(CFG.frame_len, len(out) - CFG.frame_len)
        assert rel_err(out[sl], x[sl]) <= 1e-10

    def test_shape_mismatch(self):
        spec = Spectrogram(np.zeros((10, 33), dtype=complex), 64, 32)
        with pytest.raises(ValueError):
            istft(spec, CFG)


class TestResampler:
    def test_identity_ratio(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(1000)
        out = resample_fractional(TimeSignal(x, FS), 1.0)
        assert np.array_equal(out.samples, x)

    def test_out_of_range_ratio(self):
        with pytest.raises(ValueError):
            resample_fractional(TimeSignal(np.zeros(100), FS), 1.01)

    def test_drift_on_sinusoid(self):
        # oracle: accumulated delay at input position n under ratio 1 + eps
        # is n * eps; windows are taken over the same index range of both
        # signals so the lag measures exactly that drift
        eps = 100e-6
        t = np.arange(FS)
        x = np.sin(2 * np.pi * 100 * t / FS)
        y = resample_fractional(TimeSignal(x, FS), 1.0 + eps).samples
        w = 2000
        n1 = len(y)
        drift = xcorr_lag_subsample(y[n1 - w : n1], x[n1 - w : n1], 32)
        predicted = (n1 - w / 2) * eps
        assert abs(abs(drift) - FS * eps) <= 0.2 + (FS - n1 + w / 2) * eps
        assert abs(abs(drift) - predicted) <= 0.2

    def test_roundtrip_si_sdr(self):
        rng = np.random.default_rng(5)
        x = bandlimited_noise(FS, 0.005, 0.35, rng)
        eps = 300e-6
        y = resample_fractional(TimeSignal(x, FS), 1.0 + eps)
        z = resample_fractional(y, 1.0 / (1.0 + eps)).samples
        n = min(len(z), len(x))
        guard = 64  # kernel edge effects
        a, b = z[guard : n - guard], x[guard : n - guard]
        proj = (a @ b) / (b @ b) * b
        si_sdr = 10 * np.log10(np.sum(proj**2) / np.sum((a - proj) ** 2))
        assert si_sdr >= 60.0

    @pytest.mark.parametrize("eps_ppm", [100, 400, 1000])
    def test_drift_property_up_to_1000ppm(self, eps_ppm):
        rng = np.random.default_rng(eps_ppm)
        x = bandlimited_noise(2 * FS, 0.01, 0.3, rng)
        eps = eps_ppm * 1e-6
        y = resample_fractional(TimeSignal(x, FS), 1.0 + eps).samples
        w = 1000
        n = len(y)
        drift = xcorr_lag_subsample(y[n - w : n], x[n - w : n], 64)
        # window centre sits w/2 before index n
        predicted = (n - w / 2) * eps
        assert abs(abs(drift) - predicted) <= 0.2 + w / 2 * eps
