import sys
from dataclasses import replace
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
ROOT = TESTS.parent
SCENARIO_DIR = ROOT / "scenarios"
sys.path.insert(0, str(TESTS))

from gfmlimits.scenario_io import parse_scenario  # noqa: E402


def load_scenario(name):
    path = SCENARIO_DIR / name
    return parse_scenario(path.read_text(), source=str(path))


def corpus_paths():
    return sorted(SCENARIO_DIR.glob("*.scn"))


@pytest.fixture(scope="session")
def step_scenario():
    return load_scenario("dc_link_step.scn")


@pytest.fixture(scope="session")
def step_run(step_scenario):
    """Default-resolution run of the dc-link step scenario (shared, ~3 s)."""
    from gfmlimits.simulation import run
    return run(step_scenario)


@pytest.fixture(scope="session")
def step_run_fine(step_scenario):
    """Same scenario recorded at every controller sample."""
    from gfmlimits.simulation import run
    sc = replace(step_scenario, record_dt=step_scenario.t_sample)
    return sc, run(sc)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import CRITERIA
    except ImportError:
        return
    outcome = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            name = rep.nodeid.rsplit("::", 1)[-1]
            if "test_acceptance.py" in rep.nodeid and name.startswith("test_criterion_"):
                n = int(name.split("_")[2])
                ok = key == "passed"
                outcome[n] = outcome.get(n, True) and ok
    if not outcome:
        return
    terminalreporter.section("acceptance criteria")
    for n, text in CRITERIA.items():
        if n in outcome:
            status = "PASS" if outcome[n] else "FAIL"
            terminalreporter.write_line(f"criterion {n}: {status}  {text}")
