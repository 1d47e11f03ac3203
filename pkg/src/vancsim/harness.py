"""Scenario execution: the lock-step multirate loop and run metrics.

A run plays the same calibrated source through two passes sharing one
seed set: a passive pass (control off) and, when enabled, the closed-loop
pass. Per camera frame the head advances, the tracker (if any) issues a
beam command, and the propagation paths refresh; the frame's audio
samples then stream through scene -> pick-up -> vibrometer -> controller,
whose output re-enters the scene with one step of latency.
"""

from __future__ import annotations

import math
import os
import tempfile
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import envnoise
from .control import DivergenceGuard, FxLmsController, identify_secondary_path
from .optics import LaserVibrometer, MembranePickup, incidence_gain
from .scenarios import ConfigError, ScenarioConfig
from .scene import AcousticScene, HeadTrajectory, scene_paths
from .signals import (
    Band,
    Signal,
    Spectrum,
    attenuation,
    averaged_spectrum,
    load_wav,
    overall_spl,
    resample_linear,
    third_octave_bands,
)
from .tracking import CameraModel, Tracker, calibrate_beta, centroid, binarize, render_frame

RNG_NAME = "numpy-pcg64"


@dataclass
class TrackerLogRow:
    frame_index: int
    centroid_x_px: float
    centroid_y_px: float
    beam_x_m: float
    beam_y_m: float
    lost: bool


@dataclass
class ThirdOctaveRow:
    f_lo: float
    f_hi: float
    membrane_off_db: float
    membrane_on_db: float
    eardrum_off_db: float
    eardrum_on_db: float

    @property
    def membrane_att_db(self) -> float:
        return self.membrane_off_db - self.membrane_on_db

    @property
    def eardrum_att_db(self) -> float:
        return self.eardrum_off_db - self.eardrum_on_db


@dataclass
class RunReport:
    """Everything a scenario run produced, ready for emission."""

    config: ScenarioConfig
    sample_rate: int
    metric_window_s: tuple[float, float]
    spl_membrane_off_db: float
    spl_membrane_on_db: float
    spl_eardrum_off_db: float
    spl_eardrum_on_db: float
    attenuation_membrane_db: float
    attenuation_eardrum_db: float
    third_octave: list[ThirdOctaveRow]
    spectrum_off: Spectrum
    spectrum_on: Spectrum
    eardrum_off_pa: np.ndarray
    eardrum_on_pa: np.ndarray
    calibration_gain: float
    s_hat_mode: str
    s_hat_misalignment_db: float | None
    guard_enabled: bool
    guard_tripped: bool
    guard_trip_time_s: float | None
    guard_baseline_power: float | None
    tracker_rows: list[TrackerLogRow]
    tracker_max_spot_m: float | None
    tracker_lost_frames: int
    controller_taps: np.ndarray | None
    assertions: list[tuple[str, bool, str]] = field(default_factory=list)

    @property
    def all_assertions_ok(self) -> bool:
        return all(ok for _, ok, _ in self.assertions)


def frame_bounds(n_samples: int, sample_rate: int, frame_rate: float) -> list[tuple[int, int]]:
    """Half-open audio-sample spans of each camera frame."""
    n_frames = int(math.ceil(n_samples * frame_rate / sample_rate))
    edges = [
        min(n_samples, int(round(k * sample_rate / frame_rate)))
        for k in range(n_frames + 1)
    ]
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _spawn_seeds(seed: int, n: int = 4) -> list[int]:
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _build_reference(cfg: ScenarioConfig, seed: int, fixtures_dir: str | None) -> np.ndarray:
    """Source waveform at the run sample rate, pre-calibration."""
    n = int(round(cfg.duration_s * cfg.sample_rate))
    kind = cfg.source.kind
    if kind == "grey_noise":
        from .signals import generate_grey_noise

        sig = generate_grey_noise(cfg.duration_s, cfg.sample_rate, cfg.band(), cfg.source.spl_db, seed)
        return sig.samples[:n]
    if kind == "env":
        name = cfg.source.env_name
        if fixtures_dir is None:
            tmp = tempfile.TemporaryDirectory(prefix="vancsim-fixtures-")
            fixtures_dir = tmp.name
        os.makedirs(fixtures_dir, exist_ok=True)
        path = os.path.join(fixtures_dir, f"{name}_{cfg.duration_s:g}s_seed{seed}.wav")
        if not os.path.exists(path):
            envnoise.write_fixture(name, path, cfg.duration_s, seed)
        sig = resample_linear(load_wav(path), cfg.sample_rate)
    else:  # wav
        sig = resample_linear(load_wav(cfg.source.wav_path), cfg.sample_rate)
    if len(sig.samples) < n:
        raise ConfigError(
            f"source {cfg.source.wav_path or cfg.source.env_name!r} is shorter "
            f"({len(sig.samples) / cfg.sample_rate:.2f} s) than the run ({cfg.duration_s} s)"
        )
    return sig.samples[:n].copy()


def _head_offset(traj: HeadTrajectory | None, start_s: float, t_s: float) -> np.ndarray:
    if traj is None or t_s < start_s:
        return np.zeros(3)
    return traj.offset_at(t_s - start_s)


def _compose_secondary(scene: AcousticScene, speaker: int, pickup_ir: np.ndarray,
                       gain: float, m_taps: int) -> np.ndarray:
    full = np.convolve(scene.paths.s_paths[speaker].taps, pickup_ir) * gain
    out = np.zeros(m_taps)
    out[: min(m_taps, len(full))] = full[:m_taps]
    return out


def _identify_preamble(
    cfg: ScenarioConfig,
    seed: int,
    pickup_ir: np.ndarray,
) -> tuple[np.ndarray, float | None]:
    """Drive the control speaker with white noise, record the vibrometer,
    and identify the drive-to-reading path. The record is shifted one
    sample to account for the loop's actuator latency, so the estimate
    lines up with what the controller's own timing expects."""
    fs = cfg.sample_rate
    n = int(round(cfg.secondary_path.identify_s * fs))
    scene = AcousticScene(cfg.geometry(), fs)
    pickup = MembranePickup(fs)
    ldv = LaserVibrometer(seed, fs)
    rng = np.random.default_rng(seed + 1)
    excite = rng.standard_normal(n)
    noise = ldv.noise_block(n, on_membrane=True)
    speaker = cfg.active_speaker_index()
    ctl = [0.0, 0.0]
    response = np.empty(n)
    for i in range(n):
        mem, _ = scene.step_with_primary(0.0)
        response[i] = pickup.process(mem) + noise[i]
        ctl[speaker] = excite[i]
        scene.commit_control(ctl)
    truth = _compose_secondary(scene, speaker, pickup_ir, 1.0, cfg.controller.m_taps)
    fir, _ = identify_secondary_path(
        excite[:-1],
        response[1:],
        cfg.controller.m_taps,
        mu=cfg.secondary_path.identify_mu,
        sample_rate=fs,
    )
    from .control import misalignment_db

    return fir.taps, misalignment_db(truth, fir.taps)


def run_scenario(cfg: ScenarioConfig, fixtures_dir: str | None = None) -> RunReport:
    """Execute one scenario end to end and compute its metrics."""
    cfg.validate()
    fs = cfg.sample_rate
    band = cfg.band()
    n = int(round(cfg.duration_s * fs))
    seeds = _spawn_seeds(cfg.seed)
    seed_src, seed_ldv, seed_id, _ = seeds
    win_lo, win_hi = cfg.metric_window()
    wa, wb = int(round(win_lo * fs)), int(round(win_hi * fs))

    x = _build_reference(cfg, seed_src, fixtures_dir)
    geometry = cfg.geometry()
    traj = cfg.trajectory()
    motion_start = cfg.motion.start_s
    frames = frame_bounds(n, fs, cfg.tracking.frame_rate)
    n_src = len(geometry.primary_sources)
    margin = (traj.amplitude_m * 2.0 + 0.05) if traj else 0.05

    # Passive pass: with silent speakers both observation points carry the
    # primary field only.
    scene_off = AcousticScene(geometry, fs, motion_margin_m=margin)
    mem_off = np.empty(n)
    for a, b in frames:
        scene_off.set_head_offset(_head_offset(traj, motion_start, a / fs))
        prim, _ = scene_off.run_passive([x[a:b]] * n_src)
        mem_off[a:b] = prim

    # Calibrate the source so the passive eardrum level over the metric
    # window hits the configured level exactly (linear scene, exact scale).
    measured = overall_spl(Signal(mem_off[wa:wb], fs), band)
    cal_gain = 10.0 ** ((cfg.source.spl_db - measured) / 20.0)
    x *= cal_gain
    mem_off *= cal_gain
    ear_off = mem_off.copy()

    pickup_ir = MembranePickup(fs).response.taps
    beam_gain = incidence_gain(cfg.tracking.incidence_deg)

    s_hat_mis: float | None = None
    if cfg.anc_enabled:
        if cfg.secondary_path.mode == "identify":
            s_hat, s_hat_mis = _identify_preamble(cfg, seed_id, pickup_ir)
        else:
            probe = AcousticScene(geometry, fs, motion_margin_m=margin)
            s_hat = _compose_secondary(
                probe, cfg.active_speaker_index(), pickup_ir, beam_gain, cfg.controller.m_taps
            )

    guard = None
    if cfg.anc_enabled and cfg.guard.enabled:
        guard = DivergenceGuard(
            fs,
            window_s=cfg.guard.window_s,
            trip_ratio=cfg.guard.trip_ratio,
            arm_delay_s=cfg.guard_arm_s(),
        )

    tracker_rows: list[TrackerLogRow] = []
    max_spot: float | None = None
    lost_frames = 0
    controller_taps = None

    if not cfg.anc_enabled:
        mem_on = mem_off.copy()
        ear_on = ear_off.copy()
    else:
        scene_on = AcousticScene(geometry, fs, motion_margin_m=margin)
        pickup = MembranePickup(fs)
        ldv = LaserVibrometer(seed_ldv, fs)
        controller = FxLmsController(
            cfg.controller.l_taps,
            s_hat,
            mu0=cfg.controller.mu0,
            normalized=cfg.controller.normalized,
            leakage=cfg.controller.leakage,
            guard=guard,
        )
        speaker = cfg.active_speaker_index()
        refresh = (
            cfg.secondary_path.mode == "exact"
            and cfg.secondary_path.refresh_per_frame
            and traj is not None
        )

        tracking = cfg.tracking.enabled
        if tracking:
            camera = CameraModel(
                width=cfg.tracking.camera_px,
                height=cfg.tracking.camera_px,
                distance_m=cfg.tracking.camera_distance_m,
            )
            marker_rest = np.asarray(cfg.tracking.marker_rest_uv, dtype=float)
            # One-shot scale calibration against a known in-plane shift.
            shift = 0.01
            c0 = centroid(binarize(render_frame(marker_rest, camera,
                                                cfg.tracking.marker_radius_m),
                                   cfg.tracking.threshold))
            c1 = centroid(binarize(render_frame(marker_rest + np.array([shift, 0.0]), camera,
                                                cfg.tracking.marker_radius_m),
                                   cfg.tracking.threshold))
            beta = calibrate_beta(camera.distance_m, shift, c1[0] - c0[0])
            tracker = Tracker(
                camera,
                beta,
                marker_offset_m=-marker_rest,
                frame_rate=cfg.tracking.frame_rate,
                threshold=cfg.tracking.threshold,
                mode=cfg.tracking.mode,
                initial_target_m=np.zeros(2),
            )
            pending = deque([np.zeros(2)] * cfg.tracking.delay_frames)
        applied_target = np.zeros(2)
        max_spot = 0.0

        mem_on = np.empty(n)
        ear_on = np.empty(n)
        ctl = [0.0, 0.0]
        x_on = x  # reference taken directly from the (common) source drive
        radius = pickup.radius_m

        for k, (a, b) in enumerate(frames):
            t_k = a / fs
            off3 = _head_offset(traj, motion_start, t_k)
            scene_on.set_head_offset(off3)
            if refresh:
                controller.set_secondary_estimate(
                    _compose_secondary(scene_on, speaker, pickup_ir, beam_gain,
                                       cfg.controller.m_taps)
                )
            plane = np.array([off3[1], off3[2]])
            if tracking:
                img = render_frame(marker_rest + plane, camera, cfg.tracking.marker_radius_m)
                cmd = tracker.step(img)
                pending.append(cmd.beam_target_m)
                applied_target = pending.popleft()
                if cmd.lost:
                    lost_frames += 1
                cx, cy = tracker.prev_centroid if tracker.prev_centroid else (float("nan"),) * 2
                tracker_rows.append(
                    TrackerLogRow(k, cx, cy, float(applied_target[0]), float(applied_target[1]), cmd.lost)
                )
            spot = applied_target - plane
            dist = float(np.hypot(spot[0], spot[1]))
            max_spot = max(max_spot, dist)
            beam_on = dist <= radius
            noise = ldv.noise_block(b - a, beam_on)
            prim = scene_on.push_sources_block([x_on[a:b]] * n_src)
            if beam_on:
                for i in range(b - a):
                    mem, ear = scene_on.step_with_primary(prim[i])
                    e = beam_gain * pickup.process(mem) + noise[i]
                    ctl[speaker] = controller.step(x_on[a + i], e)
                    scene_on.commit_control(ctl)
                    mem_on[a + i] = mem
                    ear_on[a + i] = ear
            else:
                for i in range(b - a):
                    mem, ear = scene_on.step_with_primary(prim[i])
                    pickup.process(mem)  # membrane keeps vibrating regardless
                    ctl[speaker] = controller.step(x_on[a + i], noise[i])
                    scene_on.commit_control(ctl)
                    mem_on[a + i] = mem
                    ear_on[a + i] = ear
        controller_taps = controller.weights.copy()

    # Metrics over the configured window.
    def spl(arr: np.ndarray) -> float:
        return overall_spl(Signal(arr[wa:wb], fs), band)

    spl_mem_off, spl_mem_on = spl(mem_off), spl(mem_on)
    spl_ear_off, spl_ear_on = spl(ear_off), spl(ear_on)
    spec_off = averaged_spectrum(Signal(ear_off[wa:wb], fs), band=band)
    spec_on = averaged_spectrum(Signal(ear_on[wa:wb], fs), band=band)
    spec_mem_off = averaged_spectrum(Signal(mem_off[wa:wb], fs), band=band)
    spec_mem_on = averaged_spectrum(Signal(mem_on[wa:wb], fs), band=band)
    rows = []
    for sub in third_octave_bands(band):
        rows.append(
            ThirdOctaveRow(
                sub.f_lo,
                sub.f_hi,
                spec_mem_off.band_level_db(sub),
                spec_mem_on.band_level_db(sub),
                spec_off.band_level_db(sub),
                spec_on.band_level_db(sub),
            )
        )

    tripped = bool(guard.tripped) if guard is not None else False
    trip_time = (
        (guard.trip_sample / fs) if guard is not None and guard.trip_sample is not None else None
    )

    report = RunReport(
        config=cfg,
        sample_rate=fs,
        metric_window_s=(win_lo, win_hi),
        spl_membrane_off_db=spl_mem_off,
        spl_membrane_on_db=spl_mem_on,
        spl_eardrum_off_db=spl_ear_off,
        spl_eardrum_on_db=spl_ear_on,
        attenuation_membrane_db=attenuation(spl_mem_off, spl_mem_on),
        attenuation_eardrum_db=attenuation(spl_ear_off, spl_ear_on),
        third_octave=rows,
        spectrum_off=spec_off,
        spectrum_on=spec_on,
        eardrum_off_pa=ear_off,
        eardrum_on_pa=ear_on,
        calibration_gain=cal_gain,
        s_hat_mode=cfg.secondary_path.mode if cfg.anc_enabled else "off",
        s_hat_misalignment_db=s_hat_mis,
        guard_enabled=guard is not None,
        guard_tripped=tripped,
        guard_trip_time_s=trip_time,
        guard_baseline_power=guard.baseline_power if guard is not None else None,
        tracker_rows=tracker_rows,
        tracker_max_spot_m=max_spot,
        tracker_lost_frames=lost_frames,
        controller_taps=controller_taps,
    )

    if guard is not None:
        report.assertions.append(
            (
                "guard_trip_expectation",
                tripped == cfg.guard.expect_trip,
                f"tripped={tripped} expected={cfg.guard.expect_trip}",
            )
        )
    if cfg.tracking.enabled and traj is not None:
        ok = max_spot is not None and max_spot <= MembranePickup(fs).radius_m
        report.assertions.append(
            (
                "beam_on_membrane",
                ok,
                f"max beam-to-centre distance {max_spot * 1e3 if max_spot is not None else 0:.2f} mm",
            )
        )
    return report
