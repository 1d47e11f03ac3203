"""Command-line front end.

Exit codes: 0 on success, 2 for configuration problems, 3 when a run's
own assertions fail (an unexpected guard state or a beam that left the
membrane).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .scenarios import (
    ConfigError,
    ScenarioConfig,
    apply_ci_profile,
    builtin_configs,
    list_scenarios,
    parse_config_file,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERTION = 3


def _resolve_configs(target: str) -> list[ScenarioConfig]:
    if os.path.exists(target):
        return [parse_config_file(target)]
    return builtin_configs(target)


def _cmd_run(args) -> int:
    try:
        configs = _resolve_configs(args.target)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_root = args.out or "runs"
    failures = 0
    for cfg in configs:
        if args.seed is not None:
            cfg.seed = args.seed
        if args.duration is not None:
            cfg.duration_s = args.duration
        if args.ci:
            cfg = apply_ci_profile(cfg)
        try:
            cfg.validate()
        except ConfigError as exc:
            print(f"config error in {cfg.name}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        from .harness import run_scenario
        from .report import emit_report

        out_dir = os.path.join(out_root, cfg.name)
        report = run_scenario(cfg, fixtures_dir=os.path.join(out_root, "fixtures"))
        emit_report(report, out_dir)
        print(
            f"{cfg.name}: eardrum {report.spl_eardrum_off_db:.1f} -> "
            f"{report.spl_eardrum_on_db:.1f} dB "
            f"(attenuation {report.attenuation_eardrum_db:.1f} dB)"
            + (f", guard tripped at {report.guard_trip_time_s:.2f} s"
               if report.guard_tripped else "")
            + (f", max beam offset {report.tracker_max_spot_m * 1e3:.2f} mm"
               if cfg.tracking.enabled else "")
            + f" -> {out_dir}"
        )
        for name, ok, detail in report.assertions:
            if not ok:
                print(f"  ASSERTION FAILED {name}: {detail}", file=sys.stderr)
                failures += 1
    return EXIT_ASSERTION if failures else EXIT_OK


def _cmd_list(_args) -> int:
    for name, desc in list_scenarios():
        print(f"{name:26s} {desc}")
    return EXIT_OK


def _cmd_identify(args) -> int:
    try:
        configs = _resolve_configs(args.target)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cfg = configs[0]
    if args.ci:
        cfg = apply_ci_profile(cfg)
    cfg.secondary_path.mode = "identify"
    from .harness import _identify_preamble
    from .optics import MembranePickup

    pickup_ir = MembranePickup(cfg.sample_rate).response.taps
    import numpy as np

    seed = int(np.random.SeedSequence(cfg.seed).spawn(4)[2].generate_state(1, dtype=np.uint64)[0])
    taps, mis = _identify_preamble(cfg, seed, pickup_ir)
    print(f"{cfg.name}: identified {len(taps)}-tap secondary path estimate")
    print(f"misalignment vs composed truth: {mis:.1f} dB")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "s_hat.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("index,value\n")
            for i, v in enumerate(taps):
                fh.write(f"{i},{v:.10g}\n")
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_version(_args) -> int:
    print(f"vancsim {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vancsim",
        description="Simulate a laser-vibrometer-sensed active noise control headrest.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a built-in scenario or a config file")
    run.add_argument("target", help="built-in scenario name or path to a config file")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument("--duration", type=float, default=None, help="override duration (s)")
    run.add_argument("--out", default=None, help="output directory (default: runs/)")
    run.add_argument("--ci", action="store_true", help="reduced profile: 16 kHz, 256 taps, short runs")
    run.set_defaults(func=_cmd_run)

    lst = sub.add_parser("list", help="list built-in scenarios")
    lst.set_defaults(func=_cmd_list)

    ident = sub.add_parser("identify", help="run secondary-path identification only")
    ident.add_argument("target", help="built-in scenario name or path to a config file")
    ident.add_argument("--out", default=None, help="write s_hat.csv into this directory")
    ident.add_argument("--ci", action="store_true", help="reduced profile")
    ident.set_defaults(func=_cmd_identify)

    ver = sub.add_parser("version", help="print the package version")
    ver.set_defaults(func=_cmd_version)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
