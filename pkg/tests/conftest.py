import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from relpose.harness import default_config, run_scenario, scenario_trace

settings.register_profile(
    "relpose", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("relpose")

POSITION_SHADE = (3.927, 23.927)
BEARING_SHADE = (19.635, 39.635)

RUNTIMES = {}
ACCEPTANCE = {}


def timed_run(key, cfg):
    start = time.perf_counter()
    result = run_scenario(cfg)
    RUNTIMES[key] = time.perf_counter() - start
    return result


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def position_run():
    """Full 60 s ship-landing run with the shipped position configuration."""
    return timed_run("position", default_config("position"))


@pytest.fixture(scope="session")
def bearing_run():
    return timed_run("bearing", default_config("bearing"))


@pytest.fixture(scope="session")
def position_trace():
    cfg = default_config("position")
    return scenario_trace(cfg.scenario, 60.0, cfg.dt)


@pytest.fixture(scope="session")
def bearing_trace():
    cfg = default_config("bearing")
    return scenario_trace(cfg.scenario, 60.0, cfg.dt)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def excited_run():
    """Position mode with the orbit and heave active throughout (no shaded phase), 120 s."""
    from dataclasses import replace

    from relpose.world import ShipScenario

    cfg = replace(default_config("position"), scenario=ShipScenario(), sweep_enabled=False, duration=120.0)
    return run_scenario(cfg)
