import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vancsim.signals import (
    Band,
    Signal,
    WavFormatError,
    attenuation,
    averaged_spectrum,
    generate_grey_noise,
    load_wav,
    overall_spl,
    resample_linear,
    shaping_gain,
    third_octave_bands,
    write_wav,
)

FS = 32000
BAND = Band(500.0, 6000.0)


def sine(freq, amplitude, duration_s=1.0, fs=FS):
    t = np.arange(int(duration_s * fs)) / fs
    return Signal(amplitude * np.sin(2 * np.pi * freq * t), fs)


class TestShapingGain:
    def test_unity_at_reference(self):
        assert shaping_gain(1000.0) == 1.0

    def test_regression_values(self):
        # Fixed constants of the weighting table (log-frequency interpolated).
        assert shaping_gain(500.0) == pytest.approx(1.288250, rel=1e-5)
        assert shaping_gain(6000.0) == pytest.approx(1.132690, rel=1e-5)

    def test_band_edges_within_12_db(self):
        for f in (500.0, 6000.0):
            g = shaping_gain(f)
            assert g > 0
            assert abs(20 * np.log10(g)) <= 12.0

    def test_continuous_and_positive(self):
        f = np.linspace(20.0, 15000.0, 3000)
        g = np.array([shaping_gain(v) for v in f])
        assert np.all(g > 0)
        # No jumps: adjacent samples move by well under 5% of the local value.
        assert np.max(np.abs(np.diff(g)) / g[:-1]) < 0.05

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            shaping_gain(0.0)
        with pytest.raises(ValueError):
            shaping_gain(-100.0)
        with pytest.raises(ValueError):
            shaping_gain(17000.0, nyquist_hz=16000.0)


class TestGreyNoise:
    def test_calibrated_level(self):
        sig = generate_grey_noise(15.0, FS, BAND, 77.7, seed=1)
        assert overall_spl(sig, BAND) == pytest.approx(77.7, abs=0.1)

    def test_deterministic(self):
        a = generate_grey_noise(2.0, FS, BAND, 77.7, seed=1)
        b = generate_grey_noise(2.0, FS, BAND, 77.7, seed=1)
        assert np.array_equal(a.samples, b.samples)
        c = generate_grey_noise(2.0, FS, BAND, 77.7, seed=2)
        assert not np.array_equal(a.samples, c.samples)

    def test_out_of_band_rejection(self):
        sig = generate_grey_noise(1.0, FS, BAND, 77.7, seed=1)
        # Independent check by direct spectral summation.
        power = np.abs(np.fft.rfft(sig.samples)) ** 2
        freqs = np.fft.rfftfreq(len(sig.samples), 1.0 / FS)
        p_in = power[(freqs >= 500) & (freqs <= 6000)].sum()
        p_low = power[freqs <= 250].sum()
        assert p_low <= 1e-4 * p_in

    def test_calibration_round_trip(self):
        for level in (40.0, 77.7, 100.0):
            sig = generate_grey_noise(1.0, FS, BAND, level, seed=3)
            assert overall_spl(sig, BAND) == pytest.approx(level, abs=0.1)

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            generate_grey_noise(-1.0, FS, BAND, 70.0, seed=0)
        with pytest.raises(ValueError):
            generate_grey_noise(1.0, FS, Band(500.0, 20000.0), 70.0, seed=0)


class TestOverallSpl:
    def test_reference_pressure_sine(self):
        sig = sine(1000.0, np.sqrt(2) * 20e-6)
        assert overall_spl(sig, BAND) == pytest.approx(0.0, abs=0.05)

    def test_one_pascal_sine(self):
        expected = 20 * np.log10((1 / np.sqrt(2)) / 20e-6)  # 90.969 dB
        assert overall_spl(sine(1000.0, 1.0), BAND) == pytest.approx(expected, abs=0.05)

    def test_silence_sentinel(self):
        assert overall_spl(Signal(np.zeros(FS), FS), BAND) == float("-inf")

    @given(gain_db=st.floats(min_value=-60.0, max_value=60.0))
    @settings(max_examples=25, deadline=None)
    def test_linearity(self, gain_db):
        base = sine(1250.0, 0.2, duration_s=0.25)
        g = 10 ** (gain_db / 20)
        assert overall_spl(base.scaled(g), BAND) - overall_spl(base, BAND) == pytest.approx(
            gain_db, abs=0.01
        )


class TestAveragedSpectrum:
    def test_tone_peak(self):
        spec = averaged_spectrum(sine(1000.0, 1.0, duration_s=15.0), band=BAND)
        k = int(np.argmax(spec.level_db))
        assert abs(spec.freqs[k] - 1000.0) <= spec.df
        assert spec.level_db[k] == pytest.approx(90.969, abs=0.5)

    def test_white_noise_flat(self):
        rng = np.random.default_rng(11)
        sig = Signal(0.01 * rng.standard_normal(15 * FS), FS)
        spec = averaged_spectrum(sig, band=BAND)
        mean = np.mean(spec.level_db)
        assert np.max(np.abs(spec.level_db - mean)) < 3.0

    def test_zero_signal(self):
        spec = averaged_spectrum(Signal(np.zeros(FS), FS), band=BAND)
        assert np.all(np.isneginf(spec.level_db))

    def test_too_short(self):
        with pytest.raises(ValueError):
            averaged_spectrum(Signal(np.zeros(100), FS), band=BAND)

    def test_parseval_consistency(self):
        rng = np.random.default_rng(7)
        sig = Signal(0.01 * rng.standard_normal(15 * FS), FS)
        spec = averaged_spectrum(sig, band=BAND)
        # Oracle: direct band power from the full-length transform.
        amp = np.abs(np.fft.rfft(sig.samples)) ** 2
        freqs = np.fft.rfftfreq(len(sig.samples), 1.0 / FS)
        sel = (freqs >= BAND.f_lo) & (freqs <= BAND.f_hi)
        direct = 2.0 * amp[sel].sum() / len(sig.samples) ** 2
        assert spec.band_power(BAND) == pytest.approx(direct, rel=0.01)


class TestAttenuation:
    @pytest.mark.parametrize(
        "before,after,expected",
        [(74.7, 59.6, 15.1), (82.1, 61.6, 20.5), (75.5, 59.8, 15.7)],
    )
    def test_reference_pairs(self, before, after, expected):
        assert attenuation(before, after) == pytest.approx(expected, abs=1e-9)

    def test_identity(self):
        assert attenuation(63.2, 63.2) == 0.0

    @given(
        a=st.floats(min_value=-200, max_value=200),
        b=st.floats(min_value=-200, max_value=200),
    )
    @settings(max_examples=50, deadline=None)
    def test_antisymmetry(self, a, b):
        assert attenuation(a, b) == -attenuation(b, a)

    def test_requires_finite(self):
        with pytest.raises(ValueError):
            attenuation(float("-inf"), 10.0)


class TestThirdOctaveBands:
    def test_count_and_edges(self):
        bands = third_octave_bands(BAND)
        assert len(bands) == 11
        assert bands[0].f_lo == 500.0
        assert bands[-1].f_hi == 6000.0
        for a, b in zip(bands[:-1], bands[1:]):
            assert a.f_hi == pytest.approx(b.f_lo)
            assert b.f_lo / a.f_lo == pytest.approx(2 ** (1 / 3))


class TestWavRoundTrip:
    def test_full_scale_pcm16(self, tmp_path):
        path = tmp_path / "full.wav"
        from scipy.io import wavfile

        wavfile.write(path, 48000, np.full(1000, 32767, dtype=np.int16))
        sig = load_wav(path)
        assert sig.sample_rate == 48000
        assert np.all(np.abs(sig.samples - 1.0) < 1e-3)

    def test_stereo_average(self, tmp_path):
        path = tmp_path / "stereo.wav"
        from scipy.io import wavfile

        data = np.stack([np.full(500, 0.5), np.full(500, -0.5)], axis=1).astype(np.float32)
        wavfile.write(path, 44100, data)
        sig = load_wav(path)
        assert np.allclose(sig.samples, 0.0)

    def test_unsupported_encoding(self, tmp_path):
        path = tmp_path / "wide.wav"
        from scipy.io import wavfile

        wavfile.write(path, 44100, np.zeros(100, dtype=np.int32))
        with pytest.raises(WavFormatError):
            load_wav(path)

    def test_garbage_file(self, tmp_path):
        path = tmp_path / "junk.wav"
        path.write_bytes(b"not a wav")
        with pytest.raises(WavFormatError):
            load_wav(path)

    def test_write_read(self, tmp_path):
        path = tmp_path / "rt.wav"
        t = np.arange(4800) / 48000
        write_wav(path, Signal(0.25 * np.sin(2 * np.pi * 440 * t), 48000))
        sig = load_wav(path)
        assert np.max(np.abs(sig.samples - 0.25 * np.sin(2 * np.pi * 440 * t))) < 1e-3


class TestResample:
    def test_tone_preserved(self):
        src = sine(1000.0, 0.5, duration_s=1.0, fs=48000)
        out = resample_linear(src, 32000)
        assert out.sample_rate == 32000
        assert len(out.samples) == 32000
        spec = averaged_spectrum(out, band=BAND)
        peak = spec.freqs[int(np.argmax(spec.level_db))]
        assert abs(peak - 1000.0) <= spec.df

    def test_identity_rate(self):
        src = sine(500.0, 0.1, duration_s=0.1)
        out = resample_linear(src, FS)
        assert np.array_equal(out.samples, src.samples)

    def test_invalid_rate(self):
        with pytest.raises(ValueError):
            resample_linear(sine(500.0, 0.1, 0.1), 0)


class TestSignalType:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Signal(np.array([0.0, np.nan]), FS)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            Signal(np.zeros(10), 0)

    def test_duration_exact(self):
        assert Signal(np.zeros(1600), FS).duration_s == 1600 / FS

    def test_band_invariants(self):
        with pytest.raises(ValueError):
            Band(600.0, 500.0)
        with pytest.raises(ValueError):
            Band(0.0, 500.0)
