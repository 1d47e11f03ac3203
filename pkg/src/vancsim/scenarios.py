"""Scenario configuration: schema, flat config files, and built-ins.

Configs are flat ``key = value`` text with dotted keys; unknown keys are
rejected so a run is always fully described by what was written. Built-in
scenarios cover a single nearby source, the two- and four-source coherent
fields, the membrane placement sweep, three environmental noise types,
and the moving-head pair with tracking enabled or disabled.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

from .scene import (
    MEMBRANE_LOCATIONS,
    HeadTrajectory,
    Position3,
    SceneGeometry,
)
from .signals import Band


class ConfigError(ValueError):
    """Invalid or unknown scenario configuration."""


# Ear-canal reference points; the sensed membrane sits at the canal plus a
# small location-dependent offset, the eardrum observation point just
# inside. +x right, +y forward, +z up, metres, head centre at origin.
_EAR_X = 0.09
_EARDRUM_X = 0.083

# Membrane-centre offsets (forward, up) from the ear canal entrance.
_LOCATION_OFFSETS = {
    "cavum_concha": (0.0, 0.0),
    "tragus": (0.008, 0.0),
    "anterior_notch": (0.005, 0.012),
    "lobule": (0.004, -0.028),
}


@dataclass
class SourceSpec:
    kind: str = "grey_noise"  # grey_noise | wav | env
    spl_db: float = 78.1  # calibrated eardrum level with control off
    wav_path: str | None = None
    env_name: str | None = None


@dataclass
class ControllerSpec:
    l_taps: int = 1024
    m_taps: int = 1024
    mu0: float = 0.05
    normalized: bool = True
    leakage: float = 0.0


@dataclass
class GuardSpec:
    enabled: bool = True
    window_s: float = 0.5
    trip_ratio: float = 30.0
    arm_s: float | None = None  # defaults to a fifth of the convergence window
    expect_trip: bool = False


@dataclass
class SecondaryPathSpec:
    mode: str = "exact"  # exact | identify
    refresh_per_frame: bool = True
    identify_s: float = 2.0
    identify_mu: float = 0.5


@dataclass
class MotionSpec:
    enabled: bool = False
    axis: tuple[float, float, float] = (0.0, 1.0, 0.0)
    amplitude_m: float = 0.04
    rate_rad_s: float = 1.0
    phase: float = 0.0
    start_s: float = 2.0


@dataclass
class TrackingSpec:
    enabled: bool = False
    frame_rate: float = 30.0
    delay_frames: int = 1
    threshold: float = 128.0
    mode: str = "position"
    camera_px: int = 256
    camera_distance_m: float = 0.3
    marker_radius_m: float = 0.005
    marker_rest_uv: tuple[float, float] = (0.004, -0.028)
    incidence_deg: float = 0.0


@dataclass
class ScenarioConfig:
    name: str = "custom"
    sample_rate: int = 32000
    duration_s: float = 15.0
    seed: int = 1
    ear: str = "left"
    band_lo_hz: float = 500.0
    band_hi_hz: float = 6000.0
    primary_sources: list[tuple[float, float, float]] = field(
        default_factory=lambda: [(0.0, -0.6, 0.0)]
    )
    membrane_location: str = "cavum_concha"
    anc_enabled: bool = True
    convergence_s: float = 5.0
    metric_window_s: tuple[float, float] | None = None
    figures: bool = True
    source: SourceSpec = field(default_factory=SourceSpec)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    guard: GuardSpec = field(default_factory=GuardSpec)
    secondary_path: SecondaryPathSpec = field(default_factory=SecondaryPathSpec)
    motion: MotionSpec = field(default_factory=MotionSpec)
    tracking: TrackingSpec = field(default_factory=TrackingSpec)

    def band(self) -> Band:
        return Band(self.band_lo_hz, self.band_hi_hz)

    def metric_window(self) -> tuple[float, float]:
        if self.metric_window_s is not None:
            return self.metric_window_s
        return (self.convergence_s, self.duration_s)

    def trajectory(self) -> HeadTrajectory | None:
        if not self.motion.enabled:
            return None
        return HeadTrajectory(
            axis=self.motion.axis,
            amplitude_m=self.motion.amplitude_m,
            angular_rate=self.motion.rate_rad_s,
            phase=self.motion.phase,
        )

    def geometry(self) -> SceneGeometry:
        if self.ear not in ("left", "right"):
            raise ConfigError(f"ear must be left or right, got {self.ear!r}")
        sign = -1.0 if self.ear == "left" else 1.0
        du, dv = _LOCATION_OFFSETS[self.membrane_location]
        return SceneGeometry(
            primary_sources=[Position3(*p) for p in self.primary_sources],
            ear_membrane=Position3(sign * _EAR_X, du, dv),
            eardrum_eval=Position3(sign * _EARDRUM_X, 0.0, 0.0),
            membrane_location_id=self.membrane_location,
        )

    def active_speaker_index(self) -> int:
        return 0 if self.ear == "left" else 1

    def validate(self) -> None:
        if self.duration_s < 1.0:
            raise ConfigError("duration must be at least 1 s")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        try:
            band = self.band()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if band.f_hi >= self.sample_rate / 2:
            raise ConfigError("band reaches Nyquist")
        if self.membrane_location not in MEMBRANE_LOCATIONS:
            raise ConfigError(f"unknown membrane location {self.membrane_location!r}")
        if self.ear not in ("left", "right"):
            raise ConfigError(f"ear must be left or right, got {self.ear!r}")
        if self.source.kind not in ("grey_noise", "wav", "env"):
            raise ConfigError(f"unknown source kind {self.source.kind!r}")
        if self.source.kind == "wav" and not self.source.wav_path:
            raise ConfigError("source.kind = wav requires source.wav_path")
        if self.source.kind == "env" and not self.source.env_name:
            raise ConfigError("source.kind = env requires source.env_name")
        if self.secondary_path.mode not in ("exact", "identify"):
            raise ConfigError(f"unknown secondary path mode {self.secondary_path.mode!r}")
        if self.tracking.mode not in ("position", "velocity"):
            raise ConfigError(f"unknown tracking mode {self.tracking.mode!r}")
        lo, hi = self.metric_window()
        if not (0.0 <= lo < hi <= self.duration_s + 1e-9):
            raise ConfigError(f"metric window [{lo}, {hi}] outside the run")
        if self.guard.trip_ratio <= 1.0:
            raise ConfigError("guard.trip_ratio must exceed 1")

    def guard_arm_s(self) -> float:
        if self.guard.arm_s is not None:
            return self.guard.arm_s
        return self.convergence_s / 5.0

    def to_flat(self) -> dict[str, str]:
        """Flat key = value echo of this config (the file format)."""
        srcs = "; ".join(f"{p[0]} {p[1]} {p[2]}" for p in self.primary_sources)
        axis = " ".join(str(v) for v in self.motion.axis)
        rest = " ".join(str(v) for v in self.tracking.marker_rest_uv)
        flat = {
            "name": self.name,
            "sample_rate": str(self.sample_rate),
            "duration_s": str(self.duration_s),
            "seed": str(self.seed),
            "ear": self.ear,
            "band.lo_hz": str(self.band_lo_hz),
            "band.hi_hz": str(self.band_hi_hz),
            "geometry.primary_sources": srcs,
            "membrane_location": self.membrane_location,
            "anc.enabled": _fmt_bool(self.anc_enabled),
            "metrics.convergence_s": str(self.convergence_s),
            "report.figures": _fmt_bool(self.figures),
            "source.kind": self.source.kind,
            "source.spl_db": str(self.source.spl_db),
            "controller.l_taps": str(self.controller.l_taps),
            "controller.m_taps": str(self.controller.m_taps),
            "controller.mu0": str(self.controller.mu0),
            "controller.normalized": _fmt_bool(self.controller.normalized),
            "controller.leakage": str(self.controller.leakage),
            "guard.enabled": _fmt_bool(self.guard.enabled),
            "guard.window_s": str(self.guard.window_s),
            "guard.trip_ratio": str(self.guard.trip_ratio),
            "guard.expect_trip": _fmt_bool(self.guard.expect_trip),
            "secondary_path.mode": self.secondary_path.mode,
            "secondary_path.refresh_per_frame": _fmt_bool(self.secondary_path.refresh_per_frame),
            "secondary_path.identify_s": str(self.secondary_path.identify_s),
            "secondary_path.identify_mu": str(self.secondary_path.identify_mu),
            "motion.enabled": _fmt_bool(self.motion.enabled),
            "motion.axis": axis,
            "motion.amplitude_m": str(self.motion.amplitude_m),
            "motion.rate_rad_s": str(self.motion.rate_rad_s),
            "motion.phase": str(self.motion.phase),
            "motion.start_s": str(self.motion.start_s),
            "tracking.enabled": _fmt_bool(self.tracking.enabled),
            "tracking.frame_rate": str(self.tracking.frame_rate),
            "tracking.delay_frames": str(self.tracking.delay_frames),
            "tracking.threshold": str(self.tracking.threshold),
            "tracking.mode": self.tracking.mode,
            "tracking.camera_px": str(self.tracking.camera_px),
            "tracking.camera_distance_m": str(self.tracking.camera_distance_m),
            "tracking.marker_radius_m": str(self.tracking.marker_radius_m),
            "tracking.marker_rest_uv": rest,
            "tracking.incidence_deg": str(self.tracking.incidence_deg),
        }
        if self.source.wav_path:
            flat["source.wav_path"] = self.source.wav_path
        if self.source.env_name:
            flat["source.env_name"] = self.source.env_name
        if self.metric_window_s is not None:
            flat["metrics.window_lo_s"] = str(self.metric_window_s[0])
            flat["metrics.window_hi_s"] = str(self.metric_window_s[1])
        if self.guard.arm_s is not None:
            flat["guard.arm_s"] = str(self.guard.arm_s)
        return flat


def _fmt_bool(v: bool) -> str:
    return "true" if v else "false"


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _parse_triples(raw: str) -> list[tuple[float, float, float]]:
    out = []
    for chunk in raw.split(";"):
        parts = chunk.split()
        if len(parts) != 3:
            raise ConfigError(f"expected 'x y z' triples separated by ';', got {chunk!r}")
        out.append(tuple(float(p) for p in parts))
    return out


def _parse_pair(raw: str) -> tuple[float, float]:
    parts = raw.split()
    if len(parts) != 2:
        raise ConfigError(f"expected two numbers, got {raw!r}")
    return (float(parts[0]), float(parts[1]))


def _setter(path: str, parse):
    def apply(cfg: ScenarioConfig, raw: str) -> None:
        obj = cfg
        *heads, leaf = path.split(".")
        for h in heads:
            obj = getattr(obj, h)
        try:
            setattr(obj, leaf, parse(raw))
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"bad value {raw!r} for {path}: {exc}") from exc

    return apply


def _set_window(which: int):
    def apply(cfg: ScenarioConfig, raw: str) -> None:
        cur = list(cfg.metric_window_s) if cfg.metric_window_s else [0.0, 0.0]
        cur[which] = float(raw)
        cfg.metric_window_s = (cur[0], cur[1])

    return apply


_KEY_SCHEMA = {
    "name": _setter("name", str),
    "sample_rate": _setter("sample_rate", int),
    "duration_s": _setter("duration_s", float),
    "seed": _setter("seed", int),
    "ear": _setter("ear", str),
    "band.lo_hz": _setter("band_lo_hz", float),
    "band.hi_hz": _setter("band_hi_hz", float),
    "geometry.primary_sources": _setter("primary_sources", _parse_triples),
    "membrane_location": _setter("membrane_location", str),
    "anc.enabled": _setter("anc_enabled", _parse_bool),
    "metrics.convergence_s": _setter("convergence_s", float),
    "metrics.window_lo_s": _set_window(0),
    "metrics.window_hi_s": _set_window(1),
    "report.figures": _setter("figures", _parse_bool),
    "source.kind": _setter("source.kind", str),
    "source.spl_db": _setter("source.spl_db", float),
    "source.wav_path": _setter("source.wav_path", str),
    "source.env_name": _setter("source.env_name", str),
    "controller.l_taps": _setter("controller.l_taps", int),
    "controller.m_taps": _setter("controller.m_taps", int),
    "controller.mu0": _setter("controller.mu0", float),
    "controller.normalized": _setter("controller.normalized", _parse_bool),
    "controller.leakage": _setter("controller.leakage", float),
    "guard.enabled": _setter("guard.enabled", _parse_bool),
    "guard.window_s": _setter("guard.window_s", float),
    "guard.trip_ratio": _setter("guard.trip_ratio", float),
    "guard.arm_s": _setter("guard.arm_s", float),
    "guard.expect_trip": _setter("guard.expect_trip", _parse_bool),
    "secondary_path.mode": _setter("secondary_path.mode", str),
    "secondary_path.refresh_per_frame": _setter("secondary_path.refresh_per_frame", _parse_bool),
    "secondary_path.identify_s": _setter("secondary_path.identify_s", float),
    "secondary_path.identify_mu": _setter("secondary_path.identify_mu", float),
    "motion.enabled": _setter("motion.enabled", _parse_bool),
    "motion.axis": _setter("motion.axis", lambda r: tuple(float(v) for v in r.split())),
    "motion.amplitude_m": _setter("motion.amplitude_m", float),
    "motion.rate_rad_s": _setter("motion.rate_rad_s", float),
    "motion.phase": _setter("motion.phase", float),
    "motion.start_s": _setter("motion.start_s", float),
    "tracking.enabled": _setter("tracking.enabled", _parse_bool),
    "tracking.frame_rate": _setter("tracking.frame_rate", float),
    "tracking.delay_frames": _setter("tracking.delay_frames", int),
    "tracking.threshold": _setter("tracking.threshold", float),
    "tracking.mode": _setter("tracking.mode", str),
    "tracking.camera_px": _setter("tracking.camera_px", int),
    "tracking.camera_distance_m": _setter("tracking.camera_distance_m", float),
    "tracking.marker_radius_m": _setter("tracking.marker_radius_m", float),
    "tracking.marker_rest_uv": _setter("tracking.marker_rest_uv", _parse_pair),
    "tracking.incidence_deg": _setter("tracking.incidence_deg", float),
}

CONFIG_KEYS = ("scenario",) + tuple(_KEY_SCHEMA)


def parse_config_text(text: str, origin: str = "<config>") -> ScenarioConfig:
    """Parse the flat dotted-key format; unknown keys are errors."""
    pairs: list[tuple[str, str]] = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        pairs.append((key, value))

    base: ScenarioConfig | None = None
    for key, value in pairs:
        if key == "scenario":
            members = builtin_configs(value)
            if len(members) != 1:
                raise ConfigError(
                    f"{origin}: scenario {value!r} is a sweep; base a config on one of its members"
                )
            base = members[0]
    cfg = base if base is not None else ScenarioConfig()
    for key, value in pairs:
        if key == "scenario":
            continue
        apply = _KEY_SCHEMA.get(key)
        if apply is None:
            raise ConfigError(f"{origin}: unknown configuration key {key!r}")
        apply(cfg, value)
    cfg.validate()
    return cfg


def parse_config_file(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), origin=str(path))


def _fig4a(**over) -> ScenarioConfig:
    cfg = ScenarioConfig(
        name="fig4a",
        primary_sources=[(0.0, -0.6, 0.0)],
        source=SourceSpec(kind="grey_noise", spl_db=78.1),
    )
    return _apply(cfg, over)


def _apply(cfg: ScenarioConfig, over: dict) -> ScenarioConfig:
    for k, v in over.items():
        setattr(cfg, k, v)
    return cfg


def _builtin_fig4a() -> list[ScenarioConfig]:
    return [_fig4a()]


def _builtin_fig4b() -> list[ScenarioConfig]:
    cfg = _fig4a(name="fig4b")
    cfg.primary_sources = [(0.0, -0.6, 0.0), (-0.566, -0.566, 0.0)]
    cfg.source.spl_db = 80.2
    return [cfg]


def _builtin_fig4c() -> list[ScenarioConfig]:
    cfg = _fig4a(name="fig4c")
    cfg.primary_sources = [
        (0.0, -0.6, 0.0),
        (-0.566, -0.566, 0.0),
        (0.566, -0.566, 0.0),
        (-1.0, 0.0, 0.0),
    ]
    cfg.source.spl_db = 80.4
    return [cfg]


def _builtin_fig3_placement() -> list[ScenarioConfig]:
    out = []
    for loc in MEMBRANE_LOCATIONS:
        cfg = _fig4a(name=f"fig3-{loc}")
        cfg.membrane_location = loc
        cfg.source.spl_db = 77.7
        out.append(cfg)
    return out


_TABLE1 = (
    ("table1-aircraft-interior", "aircraft_interior", 74.7, None),
    ("table1-aircraft-flyby", "aircraft_flyby", 82.1, (3.0, 8.0)),
    ("table1-ambient-speech", "ambient_speech", 75.5, None),
)


def _builtin_table1() -> list[ScenarioConfig]:
    out = []
    for name, env, spl, window in _TABLE1:
        cfg = ScenarioConfig(
            name=name,
            ear="right",
            primary_sources=[(0.0, -1.2, 0.0)],
            source=SourceSpec(kind="env", spl_db=spl, env_name=env),
            metric_window_s=window,
        )
        out.append(cfg)
    return out


def _fig7_base(name: str) -> ScenarioConfig:
    cfg = _fig4a(name=name)
    cfg.source.spl_db = 81.1
    cfg.motion = MotionSpec(enabled=True, start_s=2.0)
    cfg.guard = GuardSpec(enabled=True, window_s=0.5, trip_ratio=30.0, arm_s=1.0)
    return cfg


def _builtin_fig7_motion() -> list[ScenarioConfig]:
    cfg = _fig7_base("fig7-motion")
    cfg.tracking = TrackingSpec(enabled=True)
    cfg.motion.start_s = 5.0
    return [cfg]


def _builtin_fig7_dropout() -> list[ScenarioConfig]:
    cfg = _fig7_base("fig7-dropout")
    cfg.tracking = TrackingSpec(enabled=False)
    cfg.guard.expect_trip = True
    return [cfg]


_BUILTINS: dict[str, tuple[str, object]] = {
    "fig4a": ("single source 0.6 m directly behind, stationary head", _builtin_fig4a),
    "fig4b": ("two coherent sources (0.6 m behind, 0.8 m left-rear)", _builtin_fig4b),
    "fig4c": ("four coherent sources around the head", _builtin_fig4c),
    "fig3-placement": (
        "membrane placement sweep over anterior notch, tragus, cavum concha, lobule",
        _builtin_fig3_placement,
    ),
    "table1-env": (
        "environmental noise set: aircraft interior, aircraft flyby, ambient speech",
        _builtin_table1,
    ),
    "table1-aircraft-interior": (
        "aircraft interior noise, 1.2 m behind, right ear",
        lambda: [_builtin_table1()[0]],
    ),
    "table1-aircraft-flyby": (
        "aircraft flyby noise, metrics over the 3-8 s swell",
        lambda: [_builtin_table1()[1]],
    ),
    "table1-ambient-speech": (
        "crowd speech babble, 1.2 m behind, right ear",
        lambda: [_builtin_table1()[2]],
    ),
    "fig7-motion": (
        "head moving 0.08 m peak-to-peak with beam tracking enabled",
        _builtin_fig7_motion,
    ),
    "fig7-dropout": (
        "head moving with tracking disabled; beam drops off the membrane",
        _builtin_fig7_dropout,
    ),
}


def list_scenarios() -> list[tuple[str, str]]:
    """Built-in scenario names and descriptions, in a fixed order."""
    return [(name, desc) for name, (desc, _) in _BUILTINS.items()]


def builtin_configs(name: str) -> list[ScenarioConfig]:
    """Expand a built-in name into its concrete run configs."""
    entry = _BUILTINS.get(name)
    if entry is None:
        raise ConfigError(f"unknown scenario {name!r}; see `list`")
    return entry[1]()


def apply_ci_profile(cfg: ScenarioConfig) -> ScenarioConfig:
    """Reduced profile for fast validation: 16 kHz, 256 taps, short runs.

    Metric thresholds are unchanged; only rates and durations shrink. The
    flyby keeps enough length for its fixed 3-8 s metric window.
    """
    cfg = copy.deepcopy(cfg)
    cfg.sample_rate = 16000
    cfg.controller.l_taps = 256
    cfg.controller.m_taps = 256
    cfg.convergence_s = 1.5
    if cfg.metric_window_s is not None:
        lo, hi = cfg.metric_window_s
        cfg.duration_s = max(hi + 2.0, 4.0)
    else:
        cfg.duration_s = 4.0
    if cfg.motion.enabled:
        cfg.motion.start_s = min(cfg.motion.start_s, 0.8)
        if cfg.guard.arm_s is not None:
            cfg.guard.arm_s = min(cfg.guard.arm_s, 0.5)
        cfg.guard.window_s = min(cfg.guard.window_s, 0.25)
    cfg.secondary_path.identify_s = min(cfg.secondary_path.identify_s, 1.0)
    return cfg
