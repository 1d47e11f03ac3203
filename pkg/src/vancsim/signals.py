"""Test-signal generation, WAV ingestion, and level/spectrum metrics.

Everything here is pure: generators are deterministic functions of their
arguments and seed, and metrics never mutate their inputs, so concurrent
scenario runs can share this module freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal as sps
from scipy.io import wavfile

P_REF_PA = 20e-6
SILENCE_DB = float("-inf")

# Default length of one spectrum-averaging segment. 4096 samples at 32 kHz;
# kept in seconds so reduced-rate profiles reuse the same resolution.
DEFAULT_SEGMENT_S = 4096 / 32000


class WavFormatError(ValueError):
    """Raised for WAV files outside the supported encodings."""


@dataclass(frozen=True)
class Band:
    """Analysis band in Hz. Must sit strictly below Nyquist of any signal
    it is applied to (checked at the point of use)."""

    f_lo: float
    f_hi: float

    def __post_init__(self) -> None:
        if not (0.0 < self.f_lo < self.f_hi):
            raise ValueError(f"invalid band [{self.f_lo}, {self.f_hi}] Hz")

    def check_against(self, sample_rate: float) -> None:
        if self.f_hi >= sample_rate / 2:
            raise ValueError(
                f"band edge {self.f_hi} Hz reaches Nyquist of fs={sample_rate} Hz"
            )


@dataclass
class Signal:
    """A uniformly sampled waveform.

    ``samples`` are pressure in Pa, velocity in m/s, or a dimensionless
    [-1, 1] stream for freshly ingested WAV data. Duration is exactly
    ``len(samples) / sample_rate``; nothing here resamples implicitly.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not (isinstance(self.sample_rate, (int, np.integer)) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        self.sample_rate = int(self.sample_rate)
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("samples contain NaN or Inf")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def scaled(self, gain: float) -> "Signal":
        return Signal(self.samples * gain, self.sample_rate)

    def slice_s(self, t_lo: float, t_hi: float) -> "Signal":
        """Window by time in seconds (half-open sample interval)."""
        a = int(round(t_lo * self.sample_rate))
        b = int(round(t_hi * self.sample_rate))
        return Signal(self.samples[a:b].copy(), self.sample_rate)


@dataclass(frozen=True)
class Spectrum:
    """Averaged magnitude spectrum, tone-calibrated.

    ``level_db`` holds per-bin levels in dB re 20 uPa scaled so that a pure
    tone landing on a bin reads its own overall level there. ``enbw_hz`` is
    the equivalent noise bandwidth of one bin; integrating broadband power
    over a band therefore weights each bin by ``df / enbw_hz``.
    """

    freqs: np.ndarray
    level_db: np.ndarray
    enbw_hz: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "freqs", np.asarray(self.freqs, dtype=np.float64))
        object.__setattr__(self, "level_db", np.asarray(self.level_db, dtype=np.float64))
        if self.freqs.shape != self.level_db.shape:
            raise ValueError("freqs and level_db must have the same length")
        if len(self.freqs) > 1 and not np.all(np.diff(self.freqs) > 0):
            raise ValueError("freqs must be strictly ascending")

    @property
    def df(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if len(self.freqs) > 1 else self.enbw_hz

    def band_power(self, band: Band) -> float:
        """Integrated power (Pa^2) of the bins inside ``band``."""
        mask = (self.freqs >= band.f_lo) & (self.freqs <= band.f_hi)
        if not np.any(mask):
            return 0.0
        lin = 10.0 ** (self.level_db[mask] / 10.0) * P_REF_PA**2
        return float(np.sum(lin) * self.df / self.enbw_hz)

    def band_level_db(self, band: Band) -> float:
        p = self.band_power(band)
        if p <= 0.0:
            return SILENCE_DB
        return 10.0 * np.log10(p / P_REF_PA**2)


# Spectral weighting used for "grey" noise: an inverse equal-loudness style
# curve, unity at 1 kHz, tabulated at third-octave centers and interpolated
# on a log-frequency axis. The table is a fixed constant of this package and
# doubles as a regression fixture.
_GREY_CENTERS_HZ = np.array([
    25.0, 31.5, 40.0, 50.0, 63.0, 80.0, 100.0, 125.0, 160.0, 200.0,
    250.0, 315.0, 400.0, 500.0, 630.0, 800.0, 1000.0, 1250.0, 1600.0,
    2000.0, 2500.0, 3150.0, 4000.0, 5000.0, 6300.0, 8000.0, 10000.0,
    12500.0, 16000.0,
])
_GREY_WEIGHT_DB = np.array([
    12.0, 12.0, 12.0, 11.5, 11.0, 10.0, 9.0, 8.0, 7.0, 6.0,
    5.0, 4.0, 3.0, 2.2, 1.4, 0.6, 0.0, -0.4, -1.0,
    -1.8, -2.8, -3.6, -3.4, -1.6, 1.8, 4.6, 6.2,
    7.0, 8.0,
])
_GREY_LOG_F = np.log(_GREY_CENTERS_HZ)


def _shaping_gain_array(freqs_hz: np.ndarray) -> np.ndarray:
    db = np.interp(np.log(freqs_hz), _GREY_LOG_F, _GREY_WEIGHT_DB)
    return 10.0 ** (db / 20.0)


def shaping_gain(f_hz: float, nyquist_hz: float | None = None) -> float:
    """Grey-noise spectral weight at ``f_hz`` (linear, 1.0 at 1 kHz)."""
    if not np.isfinite(f_hz) or f_hz <= 0.0:
        raise ValueError(f"frequency must be positive, got {f_hz}")
    if nyquist_hz is not None and f_hz >= nyquist_hz:
        raise ValueError(f"frequency {f_hz} Hz is at or above Nyquist {nyquist_hz} Hz")
    return float(_shaping_gain_array(np.asarray([f_hz]))[0])


def generate_grey_noise(
    duration_s: float,
    sample_rate: int,
    band: Band,
    target_spl_db: float,
    seed: int,
) -> Signal:
    """Band-limited noise spectrally shaped by :func:`shaping_gain`.

    Synthesis is done on the FFT grid with seeded random phases, so repeated
    calls with identical arguments are bit-identical. Out-of-band bins are
    zeroed; the result is rescaled so ``overall_spl(result, band)`` equals
    ``target_spl_db`` to well within 0.1 dB.
    """
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    band.check_against(sample_rate)
    n = int(round(duration_s * sample_rate))
    if n < 16:
        raise ValueError("duration too short to synthesize")
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
    amp = np.zeros(len(freqs))
    mask = (freqs >= band.f_lo) & (freqs <= band.f_hi)
    amp[mask] = _shaping_gain_array(freqs[mask])
    spectrum = amp * np.exp(1j * phase)
    spectrum[0] = 0.0
    spectrum[-1] = 0.0  # Nyquist bin is out of band by construction
    x = np.fft.irfft(spectrum, n)
    sig = Signal(x, sample_rate)
    measured = overall_spl(sig, band)
    sig.samples *= 10.0 ** ((target_spl_db - measured) / 20.0)
    return sig


@lru_cache(maxsize=64)
def _band_sos(f_lo: float, f_hi: float, sample_rate: int) -> np.ndarray:
    # Order-8 Butterworth band-pass; applied forward-backward for zero phase.
    return sps.butter(4, [f_lo, f_hi], btype="bandpass", fs=sample_rate, output="sos")


def band_filtered(signal: Signal, band: Band) -> np.ndarray:
    """Zero-phase band-pass of the raw samples."""
    band.check_against(signal.sample_rate)
    return sps.sosfiltfilt(_band_sos(band.f_lo, band.f_hi, signal.sample_rate), signal.samples)


def overall_spl(signal: Signal, band: Band) -> float:
    """Band-limited sound pressure level, dB re 20 uPa.

    A silent signal yields ``SILENCE_DB`` rather than raising.
    """
    y = band_filtered(signal, band)
    rms = float(np.sqrt(np.mean(np.square(y)))) if len(y) else 0.0
    if rms <= 0.0:
        return SILENCE_DB
    return 20.0 * np.log10(rms / P_REF_PA)


def averaged_spectrum(
    signal: Signal,
    segment_s: float = DEFAULT_SEGMENT_S,
    band: Band | None = None,
) -> Spectrum:
    """Welch-averaged spectrum over 50%-overlapped Hann segments.

    Levels are tone-calibrated (see :class:`Spectrum`); integrated band
    power is consistent with the time-domain band power to within the
    averaging error of the segmentation.
    """
    nperseg = int(round(segment_s * signal.sample_rate))
    if nperseg < 16:
        raise ValueError("segment too short")
    if len(signal.samples) < nperseg:
        raise ValueError(
            f"signal of {len(signal.samples)} samples shorter than one "
            f"segment of {nperseg}"
        )
    window = sps.get_window("hann", nperseg)
    freqs, pxx = sps.welch(
        signal.samples,
        fs=signal.sample_rate,
        window=window,
        nperseg=nperseg,
        noverlap=nperseg // 2,
        scaling="spectrum",
        detrend=False,
    )
    enbw_hz = signal.sample_rate * float(np.sum(window**2) / np.sum(window) ** 2)
    if band is not None:
        band.check_against(signal.sample_rate)
        mask = (freqs >= band.f_lo) & (freqs <= band.f_hi)
        freqs, pxx = freqs[mask], pxx[mask]
    with np.errstate(divide="ignore"):
        level = 10.0 * np.log10(pxx / P_REF_PA**2)
    return Spectrum(freqs, level, enbw_hz)


def attenuation(spl_before_db: float, spl_after_db: float) -> float:
    """Level reduction in dB; positive when the "after" level is lower."""
    if not (np.isfinite(spl_before_db) and np.isfinite(spl_after_db)):
        raise ValueError("attenuation requires finite levels")
    return spl_before_db - spl_after_db


def third_octave_bands(band: Band) -> list[Band]:
    """Consecutive third-octave sub-bands covering ``band``.

    Edges step by 2^(1/3) from the lower edge; the final sub-band is
    clipped to the upper edge (and dropped if nearly degenerate).
    """
    edges = [band.f_lo]
    step = 2.0 ** (1.0 / 3.0)
    while edges[-1] * step < band.f_hi * (1.0 - 1e-9):
        edges.append(edges[-1] * step)
    edges.append(band.f_hi)
    bands = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi / lo > 1.02:
            bands.append(Band(lo, hi))
    return bands


def load_wav(path) -> Signal:
    """Read a PCM 16-bit or 32/64-bit float WAV as a [-1, 1] mono stream.

    Multichannel files are channel-averaged. Anything else is rejected.
    """
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:  # scipy raises bare ValueError/EOFError on bad files
        raise WavFormatError(f"cannot read WAV {path!r}: {exc}") from exc
    if data.size == 0:
        raise WavFormatError(f"WAV {path!r} contains no samples")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(
            f"unsupported WAV encoding {data.dtype} in {path!r}; "
            "expected 16-bit PCM or 32-bit float"
        )
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return Signal(samples, int(rate))


def write_wav(path, signal: Signal, pcm16: bool = True) -> None:
    """Write a mono WAV; 16-bit PCM by default, else 32-bit float."""
    if pcm16:
        clipped = np.clip(signal.samples, -1.0, 1.0)
        data = np.round(clipped * 32767.0).astype(np.int16)
    else:
        data = signal.samples.astype(np.float32)
    wavfile.write(path, signal.sample_rate, data)


def resample_linear(signal: Signal, new_rate: int) -> Signal:
    """Resample by linear interpolation onto the new time grid."""
    if not new_rate > 0:
        raise ValueError(f"new_rate must be positive, got {new_rate}")
    new_rate = int(new_rate)
    if new_rate == signal.sample_rate:
        return Signal(signal.samples.copy(), new_rate)
    n_old = len(signal.samples)
    n_new = int(round(n_old * new_rate / signal.sample_rate))
    t_old = np.arange(n_old) / signal.sample_rate
    t_new = np.arange(n_new) / new_rate
    return Signal(np.interp(t_new, t_old, signal.samples), new_rate)
