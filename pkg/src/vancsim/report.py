"""Report emission: delimited outputs, a column guide, and figures.

CSV files are the canonical artifacts and are byte-identical across
re-runs of the same config and seed; the PNG figures rendered next to
them are conveniences for eyeballing a run.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .harness import RunReport, RNG_NAME


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float) or isinstance(v, np.floating):
        if v != v:  # NaN
            return "nan"
        if v in (float("inf"), float("-inf")):
            return "inf" if v > 0 else "-inf"
        return f"{float(v):.10g}"
    if v is None:
        return ""
    return str(v)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def metric_rows(report: RunReport) -> list[tuple[str, object]]:
    cfg = report.config
    rows: list[tuple[str, object]] = [
        ("name", cfg.name),
        ("seed", cfg.seed),
        ("rng", RNG_NAME),
        ("sample_rate_hz", report.sample_rate),
        ("duration_s", cfg.duration_s),
        ("ear", cfg.ear),
        ("band_lo_hz", cfg.band_lo_hz),
        ("band_hi_hz", cfg.band_hi_hz),
        ("metric_window_lo_s", report.metric_window_s[0]),
        ("metric_window_hi_s", report.metric_window_s[1]),
        ("anc_enabled", cfg.anc_enabled),
        ("spl_eardrum_off_db", report.spl_eardrum_off_db),
        ("spl_eardrum_on_db", report.spl_eardrum_on_db),
        ("attenuation_eardrum_db", report.attenuation_eardrum_db),
        ("spl_membrane_off_db", report.spl_membrane_off_db),
        ("spl_membrane_on_db", report.spl_membrane_on_db),
        ("attenuation_membrane_db", report.attenuation_membrane_db),
        ("calibration_gain", report.calibration_gain),
        ("secondary_path_mode", report.s_hat_mode),
        ("secondary_path_misalignment_db", report.s_hat_misalignment_db),
        ("guard_enabled", report.guard_enabled),
        ("guard_tripped", report.guard_tripped),
        ("guard_trip_time_s", report.guard_trip_time_s),
        ("guard_baseline_power", report.guard_baseline_power),
        ("tracking_enabled", cfg.tracking.enabled),
        ("tracker_frames", len(report.tracker_rows)),
        ("tracker_lost_frames", report.tracker_lost_frames),
        ("tracker_max_spot_mm", None if report.tracker_max_spot_m is None
         else report.tracker_max_spot_m * 1e3),
    ]
    for name, ok, detail in report.assertions:
        rows.append((f"assert_{name}", ok))
    return rows


_OUTPUT_GUIDE = """\
# Run outputs

All files are UTF-8 CSV with one header row. Floats carry 10 significant
digits; re-running the same config and seed reproduces these files byte
for byte.

- metrics.csv: (metric, value) pairs. Levels are dB re 20 uPa in the
  configured band over the metric window; `attenuation_*` rows equal the
  corresponding off-level minus on-level. `assert_*` rows record the
  run's self-checks.
- spectrum_off.csv / spectrum_on.csv: (freq_hz, level_db) averaged
  eardrum spectra over the metric window, control off/on. Levels are
  tone-calibrated per bin.
- third_octave.csv: per-sub-band levels and attenuations at the membrane
  and the eardrum (f_lo_hz, f_hi_hz, then *_off_db/*_on_db/*_att_db).
- timeseries.csv: (t_s, p_off_pa, p_on_pa) eardrum pressure for the full
  run, both passes.
- tracker.csv (tracked runs): frame_index, centroid_x_px, centroid_y_px,
  beam_x_m, beam_y_m, lost_flag.
- controller_taps.csv (controlled runs): (index, value) final controller
  coefficients.
- config.txt: the flat key = value echo of the executed configuration.
- figures/: PNG renderings of the spectra, the eardrum timeseries, and
  the beam-to-membrane distance (when tracked).
"""


def emit_report(report: RunReport, out_dir: str, figures: bool | None = None) -> list[str]:
    """Write all artifacts of one run into ``out_dir``; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    def path(name: str) -> str:
        p = os.path.join(out_dir, name)
        written.append(p)
        return p

    _write_csv(path("metrics.csv"), ["metric", "value"], metric_rows(report))
    _write_csv(
        path("spectrum_off.csv"),
        ["freq_hz", "level_db"],
        zip(report.spectrum_off.freqs, report.spectrum_off.level_db),
    )
    _write_csv(
        path("spectrum_on.csv"),
        ["freq_hz", "level_db"],
        zip(report.spectrum_on.freqs, report.spectrum_on.level_db),
    )
    _write_csv(
        path("third_octave.csv"),
        [
            "f_lo_hz", "f_hi_hz",
            "membrane_off_db", "membrane_on_db", "membrane_att_db",
            "eardrum_off_db", "eardrum_on_db", "eardrum_att_db",
        ],
        [
            (
                r.f_lo, r.f_hi,
                r.membrane_off_db, r.membrane_on_db, r.membrane_att_db,
                r.eardrum_off_db, r.eardrum_on_db, r.eardrum_att_db,
            )
            for r in report.third_octave
        ],
    )
    fs = report.sample_rate
    t = np.arange(len(report.eardrum_off_pa)) / fs
    _write_csv(
        path("timeseries.csv"),
        ["t_s", "p_off_pa", "p_on_pa"],
        zip(t, report.eardrum_off_pa, report.eardrum_on_pa),
    )
    if report.tracker_rows:
        _write_csv(
            path("tracker.csv"),
            ["frame_index", "centroid_x_px", "centroid_y_px", "beam_x_m", "beam_y_m", "lost_flag"],
            [
                (r.frame_index, r.centroid_x_px, r.centroid_y_px, r.beam_x_m, r.beam_y_m, r.lost)
                for r in report.tracker_rows
            ],
        )
    if report.controller_taps is not None:
        _write_csv(
            path("controller_taps.csv"),
            ["index", "value"],
            enumerate(report.controller_taps),
        )
    with open(path("config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        for key, value in report.config.to_flat().items():
            fh.write(f"{key} = {value}\n")
    with open(path("README.md"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_OUTPUT_GUIDE)

    if figures is None:
        figures = report.config.figures
    if figures:
        written.extend(render_figures(report, os.path.join(out_dir, "figures")))
    return written


def render_figures(report: RunReport, fig_dir: str) -> list[str]:
    """Render the run's figures as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(fig_dir, exist_ok=True)
    written = []
    name = report.config.name

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(report.spectrum_off.freqs, report.spectrum_off.level_db, label="control off", lw=0.9)
    ax.plot(report.spectrum_on.freqs, report.spectrum_on.level_db, label="control on", lw=0.9)
    ax.set_xscale("log")
    ax.set_xlabel("frequency (Hz)")
    ax.set_ylabel("level (dB re 20 uPa)")
    ax.set_title(f"{name}: eardrum spectrum")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    p = os.path.join(fig_dir, "spectrum.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fs = report.sample_rate
    n = len(report.eardrum_off_pa)
    stride = max(1, n // 20000)
    t = np.arange(0, n, stride) / fs
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.plot(t, report.eardrum_off_pa[::stride], label="control off", lw=0.5, alpha=0.8)
    ax.plot(t, report.eardrum_on_pa[::stride], label="control on", lw=0.5, alpha=0.8)
    for edge in report.metric_window_s:
        ax.axvline(edge, color="k", ls=":", lw=0.8)
    if report.guard_trip_time_s is not None:
        ax.axvline(report.guard_trip_time_s, color="r", ls="--", lw=0.8, label="guard trip")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("eardrum pressure (Pa)")
    ax.set_title(f"{name}: eardrum timeseries")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right")
    fig.tight_layout()
    p = os.path.join(fig_dir, "timeseries.png")
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    if report.tracker_rows:
        frames = [r.frame_index for r in report.tracker_rows]
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        ax.plot(frames, [r.beam_x_m * 1e3 for r in report.tracker_rows], label="beam u (mm)", lw=0.9)
        ax.plot(frames, [r.beam_y_m * 1e3 for r in report.tracker_rows], label="beam v (mm)", lw=0.9)
        ax.set_xlabel("frame")
        ax.set_ylabel("beam target (mm)")
        ax.set_title(f"{name}: beam steering")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        p = os.path.join(fig_dir, "tracker.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        written.append(p)
    return written
