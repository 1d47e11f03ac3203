"""Synthetic stand-ins for the pre-recorded environmental noise sources.

Real recordings are not bundled; these generators produce deterministic,
WAV-serializable signals with the same broad character: a stationary
cabin rumble, a non-stationary flyby whose energy peaks mid-file, and a
crowd babble made of amplitude-modulated voice-band streams. Scenario
levels are set downstream by calibration, so only the spectral and
temporal shape matters here.
"""

from __future__ import annotations

import numpy as np

from .signals import Signal, write_wav

FIXTURE_RATE_HZ = 44100


def _shaped_noise(n: int, sample_rate: int, rng: np.random.Generator, shape) -> np.ndarray:
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    amp = shape(freqs)
    amp[0] = 0.0
    phase = rng.uniform(0.0, 2.0 * np.pi, len(freqs))
    x = np.fft.irfft(amp * np.exp(1j * phase), n)
    return x / np.max(np.abs(x))


def aircraft_interior(duration_s: float, sample_rate: int, seed: int) -> Signal:
    """Stationary cabin noise: low rumble with energy well into the kHz."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))

    def shape(f):
        f_safe = np.maximum(f, 30.0)
        return (f_safe / 300.0) ** -0.45 * (f < 8000.0)

    x = _shaped_noise(n, sample_rate, rng, shape)
    t = np.arange(n) / sample_rate
    hum = 0.05 * np.sin(2 * np.pi * 107.0 * t) + 0.03 * np.sin(2 * np.pi * 214.0 * t)
    x = 0.95 * x + hum
    return Signal(0.9 * x / np.max(np.abs(x)), sample_rate)


def aircraft_flyby(duration_s: float, sample_rate: int, seed: int) -> Signal:
    """Non-stationary pass-by: broadband noise under a slow level swell
    peaking a third of the way in (strongest content around 3-8 s of a
    15-s file)."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))

    def shape(f):
        f_safe = np.maximum(f, 30.0)
        return (f_safe / 500.0) ** -0.3 * (f < 9000.0)

    x = _shaped_noise(n, sample_rate, rng, shape)
    t = np.arange(n) / sample_rate
    peak_t = min(5.5, 0.4 * duration_s)
    width = max(1.5, 0.18 * duration_s)
    envelope = 0.06 + np.exp(-(((t - peak_t) / width) ** 2))
    x = x * envelope
    return Signal(0.9 * x / np.max(np.abs(x)), sample_rate)


def ambient_speech(duration_s: float, sample_rate: int, seed: int) -> Signal:
    """Crowd babble: several voice-band noise streams with syllabic
    amplitude modulation."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for _ in range(8):
        f_lo = rng.uniform(150.0, 400.0)
        f_hi = rng.uniform(2500.0, 4500.0)
        formant = rng.uniform(400.0, 2500.0)

        def shape(f, f_lo=f_lo, f_hi=f_hi, formant=formant):
            band = (f >= f_lo) & (f <= f_hi)
            bump = 1.0 + 2.0 * np.exp(-(((f - formant) / 300.0) ** 2))
            return band * bump * (np.maximum(f, f_lo) / formant) ** -0.2

        voice = _shaped_noise(n, sample_rate, rng, shape)
        rate = rng.uniform(2.0, 6.0)
        mod = 0.55 + 0.45 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
        x += voice * mod
    return Signal(0.9 * x / np.max(np.abs(x)), sample_rate)


ENV_NOISES = {
    "aircraft_interior": aircraft_interior,
    "aircraft_flyby": aircraft_flyby,
    "ambient_speech": ambient_speech,
}


def write_fixture(
    name: str,
    path,
    duration_s: float,
    seed: int,
    sample_rate: int = FIXTURE_RATE_HZ,
) -> None:
    """Synthesize one named noise and write it as a 16-bit PCM WAV."""
    if name not in ENV_NOISES:
        raise KeyError(f"unknown environmental noise {name!r}")
    write_wav(path, ENV_NOISES[name](duration_s, sample_rate, seed), pcm16=True)
