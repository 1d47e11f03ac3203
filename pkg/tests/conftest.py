import os

import pytest

from vancsim.harness import run_scenario
from vancsim.scenarios import apply_ci_profile, builtin_configs

# The acceptance suite runs the reduced profile by default (same thresholds,
# smaller rates and durations). Set VANCSIM_ACCEPTANCE_DESK=1 for the full
# 32 kHz / 1024-tap / 15 s runs.
DESK = os.environ.get("VANCSIM_ACCEPTANCE_DESK", "") == "1"


def scenario_config(name: str, index: int = 0):
    cfg = builtin_configs(name)[index]
    return cfg if DESK else apply_ci_profile(cfg)


@pytest.fixture(scope="session")
def fig4a_report():
    return run_scenario(scenario_config("fig4a"))


@pytest.fixture(scope="session")
def fig4c_report():
    return run_scenario(scenario_config("fig4c"))


@pytest.fixture(scope="session")
def fig3_reports():
    reports = {}
    for i, cfg in enumerate(builtin_configs("fig3-placement")):
        cfg = cfg if DESK else apply_ci_profile(cfg)
        reports[cfg.membrane_location] = run_scenario(cfg)
    return reports


@pytest.fixture(scope="session")
def table1_reports(tmp_path_factory):
    fixtures = str(tmp_path_factory.mktemp("env-fixtures"))
    reports = {}
    for i in range(3):
        cfg = scenario_config("table1-env", i)
        reports[cfg.name] = run_scenario(cfg, fixtures_dir=fixtures)
    return reports


@pytest.fixture(scope="session")
def fig7_motion_report():
    return run_scenario(scenario_config("fig7-motion"))


@pytest.fixture(scope="session")
def fig7_dropout_report():
    return run_scenario(scenario_config("fig7-dropout"))
