"""Geometry, free-field propagation, head motion, and the streaming scene.

The scene turns per-sample source and control-speaker drive into membrane
pressure and an eardrum observation. Propagation is point-to-point: a
fractional delay of d/c samples with 1/d spreading loss, realized as a
windowed-sinc FIR so that sub-sample geometry changes move the group delay
smoothly. The membrane-to-eardrum relation is a location-dependent coupling
filter applied to the control-speaker contribution only: the primary field
at two points a couple of centimetres apart is taken as identical, while
the fidelity of the anti-sound arriving at the eardrum degrades with the
distance between the sensing membrane and the ear canal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal as sps

SPEED_OF_SOUND = 343.0
MIN_SOURCE_DISTANCE_M = 0.05
FRACTIONAL_DELAY_HALF_TAPS = 16
MAX_FIR_TAPS = 1 << 16

MEMBRANE_LOCATIONS = ("anterior_notch", "tragus", "cavum_concha", "lobule")


@dataclass(frozen=True)
class Position3:
    """Cartesian point in metres; +x right, +y forward, +z up, head at origin."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError("position components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def distance_to(self, other: "Position3") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))

    def translated(self, offset: np.ndarray) -> "Position3":
        return Position3(self.x + offset[0], self.y + offset[1], self.z + offset[2])


@dataclass
class PathFIR:
    """Finite impulse response of an acoustic path."""

    taps: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or len(self.taps) < 1:
            raise ValueError("PathFIR needs at least one tap")
        if len(self.taps) > MAX_FIR_TAPS:
            raise ValueError(f"PathFIR longer than {MAX_FIR_TAPS} taps")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("PathFIR taps must be finite")

    @property
    def energy(self) -> float:
        return float(np.dot(self.taps, self.taps))

    def energy_group_delay(self) -> float:
        """Energy-weighted tap centroid, in samples."""
        e = np.square(self.taps)
        return float(np.dot(np.arange(len(e)), e) / np.sum(e))


@dataclass(frozen=True)
class HeadTrajectory:
    """Sinusoidal rigid head displacement along a fixed axis.

    ``amplitude_m`` is half the peak-to-peak travel; peak speed is
    ``amplitude_m * angular_rate``.
    """

    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    amplitude_m: float = 0.04
    angular_rate: float = 1.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude_m < 0:
            raise ValueError("amplitude must be non-negative")
        a = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(a)
        if n == 0:
            raise ValueError("axis must be a non-zero vector")
        object.__setattr__(self, "axis", tuple(a / n))

    @property
    def max_speed(self) -> float:
        return self.amplitude_m * self.angular_rate

    def offset_at(self, t_s: float) -> np.ndarray:
        return np.asarray(self.axis) * (
            self.amplitude_m * math.sin(self.angular_rate * t_s + self.phase)
        )


def head_position(traj: HeadTrajectory, t_s: float) -> Position3:
    if t_s < 0:
        raise ValueError("time must be non-negative")
    off = traj.offset_at(t_s)
    return Position3(off[0], off[1], off[2])


@dataclass
class SceneGeometry:
    """Placement of sources, the control-speaker pair, and the sensed ear.

    The speaker pair defaults to 0.44 m spacing behind the head, aimed
    inward at 45 degrees. ``membrane_location_id`` selects the coupling
    filter between the membrane point and the eardrum observation.
    """

    primary_sources: list[Position3]
    ear_membrane: Position3
    eardrum_eval: Position3
    secondary_speakers: tuple[Position3, Position3] = (
        Position3(-0.22, -0.22, 0.0),
        Position3(0.22, -0.22, 0.0),
    )
    membrane_location_id: str = "cavum_concha"

    def __post_init__(self) -> None:
        if not self.primary_sources:
            raise ValueError("at least one primary source required")
        if self.membrane_location_id not in MEMBRANE_LOCATIONS:
            raise ValueError(
                f"unknown membrane location {self.membrane_location_id!r}; "
                f"expected one of {MEMBRANE_LOCATIONS}"
            )


@dataclass(frozen=True)
class CouplingFilter:
    """Membrane-point to eardrum transfer for one pick-up location."""

    location_id: str
    fir: PathFIR


def quiet_zone_radius(f_hz: float) -> float:
    """Radius of the controlled zone around the error point: a tenth of
    the wavelength at ``f_hz``."""
    if f_hz <= 0:
        raise ValueError("frequency must be positive")
    return (SPEED_OF_SOUND / f_hz) / 10.0


def free_field_ir(
    src: Position3,
    rcv: Position3,
    sample_rate: int,
    n_taps: int,
) -> PathFIR:
    """Point-to-point free-field impulse response.

    Fractional delay d/c samples at gain 1/d, built from a Hann-windowed
    sinc kernel (32 taps) and rescaled so the tap energy is exactly
    (1/d)^2. Distances are clamped at 0.05 m to avoid the 1/d singularity.
    Kernel taps that would land before sample zero are dropped, keeping
    the response causal.
    """
    d = max(src.distance_to(rcv), MIN_SOURCE_DISTANCE_M)
    delay = d / SPEED_OF_SOUND * sample_rate
    gain = 1.0 / d
    half = FRACTIONAL_DELAY_HALF_TAPS
    if delay > n_taps - half - 1:
        raise ValueError(
            f"path delay of {delay:.1f} samples does not fit in {n_taps} taps"
        )
    taps = np.zeros(n_taps)
    lo = max(0, int(math.floor(delay)) - (half - 1))
    hi = int(math.floor(delay)) + half + 1
    idx = np.arange(lo, hi)
    u = idx - delay
    kernel = np.sinc(u) * (0.5 + 0.5 * np.cos(np.pi * u / half))
    taps[idx] = kernel
    taps *= gain / math.sqrt(np.dot(kernel, kernel))
    return PathFIR(taps, sample_rate)


def _coupling_magnitude(location_id: str, freqs_hz: np.ndarray) -> np.ndarray:
    f = np.asarray(freqs_hz, dtype=float)
    safe = np.maximum(f, 1e-9)
    if location_id == "cavum_concha":
        return np.ones_like(f)
    if location_id in ("tragus", "anterior_notch"):
        return np.where(f <= 4000.0, 1.0, 4000.0 / safe)
    if location_id == "lobule":
        base = np.where(f <= 3000.0, 1.0, 3000.0 / safe)
        shelf = np.ones_like(f)
        up = (f > 4600.0) & (f < 5000.0)
        shelf[up] = 1.0 + 0.5 * (1.0 - np.cos(np.pi * (f[up] - 4600.0) / 400.0))
        shelf[(f >= 5000.0) & (f <= 6300.0)] = 2.0
        dn = (f > 6300.0) & (f < 6800.0)
        shelf[dn] = 2.0 - 0.5 * (1.0 - np.cos(np.pi * (f[dn] - 6300.0) / 500.0))
        return base * shelf
    raise ValueError(f"unknown membrane location {location_id!r}")


# Extra transport lag of the lobule coupling. 3 samples at 32 kHz, i.e. the
# ~3 cm separation between the lobule and the ear canal; this is what turns
# the 5-6 kHz shelf into a level increase once anti-sound and primary sound
# interfere at the eardrum.
_LOBULE_LAG_S = 3.0 / 32000.0


@lru_cache(maxsize=16)
def _coupling_fir(location_id: str, sample_rate: int) -> PathFIR:
    if location_id == "cavum_concha":
        return PathFIR(np.array([1.0]), sample_rate)
    nyq = sample_rate / 2.0
    grid = np.linspace(0.0, nyq, 513)
    mag = _coupling_magnitude(location_id, grid)
    linear = sps.firwin2(255, grid / nyq, mag)
    taps = sps.minimum_phase(linear, method="homomorphic")
    if location_id == "lobule":
        lag = int(round(_LOBULE_LAG_S * sample_rate))
        taps = np.concatenate([np.zeros(lag), taps])
    return PathFIR(taps, sample_rate)


def coupling_filter(location_id: str, sample_rate: int) -> CouplingFilter:
    """Membrane-to-eardrum coupling for one pick-up location.

    cavum_concha is an identity; tragus and anterior_notch are flat to
    4 kHz then roll off at -6 dB/octave; the lobule is flat to 3 kHz, rolls
    off above, and carries a +6 dB shelf across 5-6 kHz plus a short
    transport lag. Filters are minimum-phase so that the flat region does
    not comb against the primary field.
    """
    fir = _coupling_fir(location_id, int(sample_rate))
    return CouplingFilter(location_id, PathFIR(fir.taps.copy(), fir.sample_rate))


@dataclass
class ScenePaths:
    p_paths: list[PathFIR]
    s_paths: tuple[PathFIR, PathFIR]
    coupling: CouplingFilter


def scene_paths(
    geometry: SceneGeometry,
    head_offset: np.ndarray | Position3,
    sample_rate: int,
    n_taps: int | None = None,
) -> ScenePaths:
    """All propagation paths for a rigid head displacement.

    The head offset translates the membrane (and eardrum) points; sources
    and speakers stay fixed. Deterministic: equal offsets give identical
    tap sets.
    """
    if isinstance(head_offset, Position3):
        head_offset = head_offset.as_array()
    head_offset = np.asarray(head_offset, dtype=float)
    membrane = geometry.ear_membrane.translated(head_offset)
    points = list(geometry.primary_sources) + list(geometry.secondary_speakers)
    if n_taps is None:
        dmax = max(p.distance_to(membrane) for p in points)
        n_taps = int(math.ceil(dmax / SPEED_OF_SOUND * sample_rate)) + 48
    p_paths = [free_field_ir(p, membrane, sample_rate, n_taps) for p in geometry.primary_sources]
    s_paths = tuple(
        free_field_ir(s, membrane, sample_rate, n_taps) for s in geometry.secondary_speakers
    )
    return ScenePaths(p_paths, s_paths, coupling_filter(geometry.membrane_location_id, sample_rate))


class AcousticScene:
    """Streaming acoustic simulator for one ear.

    Owns the propagation delay lines; a live instance must not be shared
    between runs. Geometry updates are expected at tracker frame
    boundaries, before the frame's audio samples; input histories survive
    path swaps so slowly varying geometry stays continuous.

    Per sample: membrane pressure is the sum of primary-source and
    control-speaker contributions; the eardrum observation adds the
    primary part to the coupling-filtered control part. The control
    samples committed for step n reach the membrane from step n+1 onward
    (one-step actuator latency).
    """

    def __init__(
        self,
        geometry: SceneGeometry,
        sample_rate: int,
        motion_margin_m: float = 0.1,
    ) -> None:
        self.geometry = geometry
        self.sample_rate = int(sample_rate)
        membrane = geometry.ear_membrane
        points = list(geometry.primary_sources) + list(geometry.secondary_speakers)
        dmax = max(p.distance_to(membrane) for p in points) + motion_margin_m
        self._n_taps = int(math.ceil(dmax / SPEED_OF_SOUND * self.sample_rate)) + 48
        self._head_offset = np.zeros(3)
        self._paths = scene_paths(geometry, self._head_offset, self.sample_rate, self._n_taps)
        n_src = len(geometry.primary_sources)
        # Newest-first input histories.
        self._src_hist = [np.zeros(self._n_taps) for _ in range(n_src)]
        self._spk_hist = [np.zeros(self._n_taps) for _ in range(2)]
        c_len = len(self._paths.coupling.fir.taps)
        self._sec_hist = np.zeros(c_len)
        self._c_taps = self._paths.coupling.fir.taps

    @property
    def paths(self) -> ScenePaths:
        return self._paths

    @property
    def head_offset(self) -> np.ndarray:
        return self._head_offset.copy()

    def set_head_offset(self, offset: np.ndarray) -> None:
        """Re-derive propagation paths for a new rigid head displacement.
        Delay-line histories are preserved."""
        offset = np.asarray(offset, dtype=float)
        if np.array_equal(offset, self._head_offset):
            return
        self._head_offset = offset.copy()
        self._paths = scene_paths(
            self.geometry, offset, self.sample_rate, self._n_taps
        )

    def push_sources_block(self, source_blocks: list[np.ndarray]) -> np.ndarray:
        """Advance the primary-source delay lines by one block.

        Returns the primary-field membrane pressure for the block. The
        block must then be consumed sample-by-sample via
        :meth:`step_with_primary` (or all at once in a passive run).
        """
        if len(source_blocks) != len(self._src_hist):
            raise ValueError(
                f"expected {len(self._src_hist)} source blocks, got {len(source_blocks)}"
            )
        n = len(source_blocks[0])
        prim = np.zeros(n)
        for j, block in enumerate(source_blocks):
            if len(block) != n:
                raise ValueError("source blocks must share one length")
            hist = self._src_hist[j]
            ext = np.concatenate([hist[::-1], block])
            prim += np.convolve(ext, self._paths.p_paths[j].taps)[
                len(hist) : len(hist) + n
            ]
            self._src_hist[j] = ext[-len(hist):][::-1].copy()
        return prim

    def step_with_primary(self, prim_value: float) -> tuple[float, float]:
        """One audio step given the precomputed primary contribution.

        Returns (membrane_pressure, eardrum_pressure) in Pa using the
        control samples committed so far.
        """
        sec = 0.0
        for k in range(2):
            sec += float(np.dot(self._paths.s_paths[k].taps, self._spk_hist[k]))
        self._sec_hist[1:] = self._sec_hist[:-1]
        self._sec_hist[0] = sec
        ear = prim_value + float(np.dot(self._c_taps, self._sec_hist))
        return prim_value + sec, ear

    def commit_control(self, control_samples) -> None:
        """Push this step's control-speaker samples; they reach the
        membrane starting with the next step."""
        if len(control_samples) != 2:
            raise ValueError("expected one control sample per speaker")
        for k in range(2):
            v = control_samples[k]
            if not math.isfinite(v):
                raise ValueError("control samples must be finite")
            h = self._spk_hist[k]
            h[1:] = h[:-1]
            h[0] = v

    def step(self, source_samples, control_samples) -> tuple[float, float]:
        """Canonical per-sample step.

        ``control_samples`` is the drive emitted after the previous step
        (so control applied now first shows up in the next membrane
        sample). Returns (membrane_pressure, eardrum_pressure).
        """
        if len(source_samples) != len(self._src_hist):
            raise ValueError(
                f"expected {len(self._src_hist)} source samples, got {len(source_samples)}"
            )
        self.commit_control(control_samples)
        blocks = [np.asarray([float(s)]) for s in source_samples]
        prim = self.push_sources_block(blocks)[0]
        return self.step_with_primary(prim)

    def run_passive(self, source_blocks: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Fast path for a control-free block: with silent speakers the
        membrane and eardrum streams are both the primary field."""
        prim = self.push_sources_block(source_blocks)
        return prim, prim.copy()
