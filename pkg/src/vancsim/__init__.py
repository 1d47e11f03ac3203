"""Deterministic simulator of a laser-vibrometer-sensed ANC headrest."""

__version__ = "0.1.0"

from .signals import (  # noqa: F401
    Band,
    Signal,
    Spectrum,
    attenuation,
    averaged_spectrum,
    generate_grey_noise,
    load_wav,
    overall_spl,
    resample_linear,
    shaping_gain,
)
