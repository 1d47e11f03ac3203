"""Camera-based marker tracking and beam steering.

A synthetic orthographic camera renders the circular marker as a bright
disk; thresholding and a mass centroid recover its pixel position, which
scales back to metres through the calibration factor and steers the beam
to the membrane via the fixed marker-to-membrane offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class TargetLostError(RuntimeError):
    """No marker pixels found in the frame."""


class CalibrationError(ValueError):
    """Calibration observed no usable pixel shift."""


@dataclass
class FrameImage:
    """Grayscale camera frame with intensities in [0, 255]."""

    intensities: np.ndarray

    def __post_init__(self) -> None:
        self.intensities = np.asarray(self.intensities, dtype=np.float64)
        if self.intensities.ndim != 2:
            raise ValueError("frame must be a 2-D grid")
        h, w = self.intensities.shape
        if h < 16 or w < 16:
            raise ValueError("frame must be at least 16x16 pixels")
        if self.intensities.min() < 0.0 or self.intensities.max() > 255.0:
            raise ValueError("intensities must lie in [0, 255]")

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    @property
    def height(self) -> int:
        return self.intensities.shape[0]


@dataclass(frozen=True)
class CameraModel:
    """Orthographic camera looking at the membrane plane.

    The scale is proportional to the camera-to-target distance (a pinhole
    at fixed angular pixel pitch), so recalibrating at twice the distance
    doubles metres-per-pixel. World (u, v) in metres maps to (column, row)
    around the image centre.
    """

    width: int = 256
    height: int = 256
    distance_m: float = 0.3
    m_per_px_at_1m: float = 5e-4 / 0.3

    @property
    def m_per_px(self) -> float:
        return self.m_per_px_at_1m * self.distance_m

    @property
    def center_px(self) -> tuple[float, float]:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def world_to_px(self, world_uv: np.ndarray) -> np.ndarray:
        cx, cy = self.center_px
        return np.asarray([cx, cy]) + np.asarray(world_uv) / self.m_per_px


def render_frame(
    marker_world_uv: np.ndarray,
    camera: CameraModel,
    marker_radius_m: float = 5e-3,
) -> FrameImage:
    """Render the marker as a filled 255-intensity disk on black.

    The rim is anti-aliased over one pixel. A marker that has left the
    field of view simply yields an empty frame; the loss is surfaced at
    centroid time.
    """
    img = np.zeros((camera.height, camera.width))
    cx, cy = camera.world_to_px(marker_world_uv)
    r_px = marker_radius_m / camera.m_per_px
    x_lo = max(0, int(math.floor(cx - r_px - 1)))
    x_hi = min(camera.width, int(math.ceil(cx + r_px + 2)))
    y_lo = max(0, int(math.floor(cy - r_px - 1)))
    y_hi = min(camera.height, int(math.ceil(cy + r_px + 2)))
    if x_lo >= x_hi or y_lo >= y_hi:
        return FrameImage(img)
    xs = np.arange(x_lo, x_hi)
    ys = np.arange(y_lo, y_hi)
    dist = np.hypot(xs[None, :] - cx, ys[:, None] - cy)
    coverage = np.clip(r_px + 0.5 - dist, 0.0, 1.0)
    img[y_lo:y_hi, x_lo:x_hi] = 255.0 * coverage
    return FrameImage(img)


def binarize(frame: FrameImage | np.ndarray, threshold: float) -> np.ndarray:
    """Pixel-wise threshold: True where intensity >= threshold.

    The comparison is inclusive; a pixel exactly at the threshold is set.
    """
    if not (0.0 < threshold <= 255.0):
        raise ValueError(f"threshold {threshold} outside (0, 255]")
    grid = frame.intensities if isinstance(frame, FrameImage) else np.asarray(frame)
    return grid >= threshold


def centroid(binary: np.ndarray) -> tuple[float, float]:
    """Mass centre (x_col, y_row) of the set pixels, sub-pixel."""
    ys, xs = np.nonzero(binary)
    if len(xs) == 0:
        raise TargetLostError("no marker pixels above threshold")
    return float(xs.mean()), float(ys.mean())


def pixel_velocity(
    prev_px: tuple[float, float],
    cur_px: tuple[float, float],
    frame_rate: float,
) -> np.ndarray:
    """Centroid shift between adjacent frames expressed in px/s."""
    return (np.asarray(cur_px, dtype=float) - np.asarray(prev_px, dtype=float)) * frame_rate


def to_world(v_px_per_s: np.ndarray, m_per_px: float) -> np.ndarray:
    """Pixel-space velocity scaled to metres per second."""
    return float(m_per_px) * np.asarray(v_px_per_s, dtype=float)


def calibrate_beta(
    distance_m: float,
    known_shift_world_m: float,
    observed_shift_px: float,
) -> float:
    """Metres-per-pixel from a known physical shift seen by the camera.

    Recorded together with the camera distance by the caller; raises
    :class:`CalibrationError` when the observed shift is under a pixel.
    """
    if abs(observed_shift_px) < 1.0:
        raise CalibrationError(
            f"observed shift of {observed_shift_px} px too small to calibrate"
        )
    if distance_m <= 0:
        raise ValueError("camera distance must be positive")
    return known_shift_world_m / observed_shift_px


@dataclass
class GalvoCommand:
    """Absolute beam target on the membrane plane."""

    beam_target_m: np.ndarray
    lost: bool = False

    def __post_init__(self) -> None:
        self.beam_target_m = np.asarray(self.beam_target_m, dtype=np.float64)
        if self.beam_target_m.shape != (2,) or not np.all(np.isfinite(self.beam_target_m)):
            raise ValueError("beam target must be a finite 2-vector")


class Tracker:
    """Frame-rate marker tracker emitting beam-steering commands.

    ``marker_offset_m`` is the fixed vector from the marker centre to the
    membrane centre, specified during setup. In the default ``position``
    mode each frame commands the absolute membrane position estimate;
    ``velocity`` mode instead integrates the scaled centroid shift, which
    drifts but exercises the same pixel-velocity pathway. On a lost target
    the previous command is held and the lost flag raised.
    """

    def __init__(
        self,
        camera: CameraModel,
        m_per_px: float,
        marker_offset_m: np.ndarray,
        frame_rate: float = 30.0,
        threshold: float = 128.0,
        mode: str = "position",
        initial_target_m: np.ndarray | None = None,
    ) -> None:
        if m_per_px <= 0:
            raise ValueError("m_per_px must be positive")
        if frame_rate <= 0:
            raise ValueError("frame rate must be positive")
        if mode not in ("position", "velocity"):
            raise ValueError(f"unknown tracker mode {mode!r}")
        self.camera = camera
        self.m_per_px = float(m_per_px)
        self.marker_offset_m = np.asarray(marker_offset_m, dtype=float)
        self.frame_rate = float(frame_rate)
        self.threshold = float(threshold)
        self.mode = mode
        self.prev_centroid: tuple[float, float] | None = None
        self.lost = False
        self.beam_target_m = (
            np.zeros(2) if initial_target_m is None else np.asarray(initial_target_m, dtype=float)
        )

    def step(self, frame: FrameImage) -> GalvoCommand:
        """Consume one frame, emit the beam command for the next interval."""
        try:
            c = centroid(binarize(frame, self.threshold))
        except TargetLostError:
            self.lost = True
            return GalvoCommand(self.beam_target_m.copy(), lost=True)
        cx, cy = self.camera.center_px
        marker_world = (np.asarray(c) - np.asarray([cx, cy])) * self.m_per_px
        if self.mode == "position" or self.prev_centroid is None:
            target = marker_world + self.marker_offset_m
        else:
            shift_px = np.asarray(c) - np.asarray(self.prev_centroid)
            target = self.beam_target_m + shift_px * self.m_per_px
        self.prev_centroid = c
        self.beam_target_m = target
        self.lost = False
        return GalvoCommand(target.copy(), lost=False)


def write_pgm(frame: FrameImage, path) -> None:
    """Binary PGM dump of one frame, for eyeballing tracking issues."""
    data = np.clip(np.round(frame.intensities), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
