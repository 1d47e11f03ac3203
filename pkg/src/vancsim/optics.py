"""Membrane pick-up and laser-vibrometer measurement channel.

The pick-up converts local sound pressure to surface velocity through a
small resonant filter; the vibrometer reads that velocity along the beam,
adding an instrument noise floor while the spot sits on the membrane and
returning loud, uncorrelated noise once the spot falls off the rim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .scene import PathFIR, Position3

# Incidence-angle loss follows cos(theta)^k with k anchored so the reading
# drops 5 dB at 60 degrees off the membrane normal.
INCIDENCE_EXPONENT = math.log(10.0 ** (-5.0 / 20.0)) / math.log(math.cos(math.radians(60.0)))

NOISE_FLOOR_DENSITY = 20e-9  # m/s per sqrt(Hz)
DROPOUT_EXCESS_DB = 60.0

MEMBRANE_DIAMETER_M = 9.2e-3
MEMBRANE_DEPTH_M = 4.6e-3
MEMBRANE_MASS_KG = 0.2e-3


def incidence_gain(incidence_deg: float) -> float:
    """Linear reading loss for an off-normal beam; 1.0 at normal incidence,
    monotonically non-increasing, 10^(-5/20) at 60 degrees."""
    if not (0.0 <= incidence_deg < 90.0):
        raise ValueError(f"incidence angle {incidence_deg} outside [0, 90)")
    return math.cos(math.radians(incidence_deg)) ** INCIDENCE_EXPONENT


@dataclass
class BeamState:
    """Laser spot on the membrane plane, relative to the membrane centre."""

    spot_m: np.ndarray
    incidence_deg: float = 0.0

    def __post_init__(self) -> None:
        self.spot_m = np.asarray(self.spot_m, dtype=np.float64)
        if self.spot_m.shape != (2,) or not np.all(np.isfinite(self.spot_m)):
            raise ValueError("spot must be a finite 2-vector in metres")
        if not (0.0 <= self.incidence_deg < 90.0):
            raise ValueError(f"incidence angle {self.incidence_deg} outside [0, 90)")


@dataclass(frozen=True)
class LdvReading:
    velocity: float
    on_membrane: bool


class MembranePickup:
    """Pressure-to-velocity response of the retro-reflective drum.

    Second-order resonant high-pass into a first-order low-pass, scaled so
    the gain at 1 kHz is exactly 1e-3 (m/s)/Pa; flat within 3 dB across
    500 Hz - 6 kHz. Streaming state is single-owner.
    """

    RESONANCE_HZ = 280.0
    RESONANCE_Q = 1.2
    LOWPASS_HZ = 9000.0
    MIDBAND_GAIN = 1e-3

    def __init__(
        self,
        sample_rate: int,
        center: Position3 = Position3(0.0, 0.0, 0.0),
        diameter_m: float = MEMBRANE_DIAMETER_M,
    ) -> None:
        if diameter_m <= 0:
            raise ValueError("diameter must be positive")
        self.sample_rate = int(sample_rate)
        self.center = center
        self.diameter_m = float(diameter_m)
        self.depth_m = MEMBRANE_DEPTH_M
        self.mass_kg = MEMBRANE_MASS_KG
        self.sos = self._design(self.sample_rate)
        self._zi = np.zeros((self.sos.shape[0], 2))

    @classmethod
    def _design(cls, sample_rate: int) -> np.ndarray:
        # Prewarp corners so the digital response hits them exactly.
        def warp(f_hz: float) -> float:
            return 2.0 * sample_rate * math.tan(math.pi * f_hz / sample_rate)

        w0 = warp(cls.RESONANCE_HZ)
        wl = warp(min(cls.LOWPASS_HZ, 0.45 * sample_rate))
        hp_b, hp_a = sps.bilinear([1.0, 0.0, 0.0], [1.0, w0 / cls.RESONANCE_Q, w0 * w0], sample_rate)
        lp_b, lp_a = sps.bilinear([wl], [1.0, wl], sample_rate)
        sos = np.vstack([
            np.concatenate([hp_b, hp_a]),
            np.concatenate([lp_b, [0.0], lp_a, [0.0]]),
        ])
        _, h = sps.sosfreqz(sos, worN=[1000.0], fs=sample_rate)
        sos[0, :3] *= cls.MIDBAND_GAIN / abs(h[0])
        return sos

    @property
    def radius_m(self) -> float:
        return self.diameter_m / 2.0

    @property
    def response(self) -> PathFIR:
        """FIR view of the pressure-to-velocity response (truncated)."""
        impulse = np.zeros(512)
        impulse[0] = 1.0
        return PathFIR(sps.sosfilt(self.sos, impulse), self.sample_rate)

    def process(self, pressure_pa: float) -> float:
        """One streaming sample of surface velocity (m/s)."""
        x = pressure_pa
        zi = self._zi
        for s in range(self.sos.shape[0]):
            b0, b1, b2, _, a1, a2 = self.sos[s]
            y = b0 * x + zi[s, 0]
            zi[s, 0] = b1 * x - a1 * y + zi[s, 1]
            zi[s, 1] = b2 * x - a2 * y
            x = y
        return x

    def process_block(self, pressure_pa: np.ndarray) -> np.ndarray:
        out, self._zi = sps.sosfilt(self.sos, pressure_pa, zi=self._zi)
        return out

    def reset(self) -> None:
        self._zi[:] = 0.0


class LaserVibrometer:
    """Streaming velocity readout with seeded instrument noise.

    On the membrane the reading is the true surface velocity scaled by the
    incidence loss plus a white noise floor of 20 nm/s/sqrt(Hz). Off the
    membrane (a dropout) the reading is independent noise 60 dB above the
    floor: loud, and uncorrelated with the sound field.
    """

    def __init__(
        self,
        seed: int,
        sample_rate: int,
        noise_enabled: bool = True,
        noise_floor_density: float = NOISE_FLOOR_DENSITY,
        dropout_excess_db: float = DROPOUT_EXCESS_DB,
    ) -> None:
        self.sample_rate = int(sample_rate)
        self.noise_enabled = bool(noise_enabled)
        self.floor_sigma = noise_floor_density * math.sqrt(sample_rate / 2.0)
        self.dropout_sigma = self.floor_sigma * 10.0 ** (dropout_excess_db / 20.0)
        self._rng = np.random.default_rng(seed)

    def spot_on_membrane(self, beam: BeamState, pickup: MembranePickup) -> bool:
        return float(np.hypot(beam.spot_m[0], beam.spot_m[1])) <= pickup.radius_m

    def read(self, beam: BeamState, pickup: MembranePickup, true_velocity: float) -> LdvReading:
        """Measure one sample of membrane velocity along the beam."""
        if not math.isfinite(true_velocity):
            raise ValueError("true velocity must be finite")
        on = self.spot_on_membrane(beam, pickup)
        if on:
            v = incidence_gain(beam.incidence_deg) * true_velocity
            if self.noise_enabled:
                v += self.floor_sigma * self._rng.standard_normal()
        else:
            v = self.dropout_sigma * self._rng.standard_normal() if self.noise_enabled else 0.0
        return LdvReading(float(v), on)

    def noise_block(self, n: int, on_membrane: bool) -> np.ndarray:
        """Pre-drawn additive noise for ``n`` samples of a constant beam
        state (the harness fast path; consumes the same RNG stream)."""
        if not self.noise_enabled:
            return np.zeros(n)
        sigma = self.floor_sigma if on_membrane else self.dropout_sigma
        return sigma * self._rng.standard_normal(n)
