"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np
import pytest

from ionquench.cli import time_grid
from ionquench.config import ScenarioConfig
from ionquench.params import TrapScenario
from ionquench.visibility import prepare

# criterion id -> list of (passed, detail)
ACCEPTANCE: dict = {}


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


@lru_cache(maxsize=None)
def cached_setup(g: float, delta: float = 0.025, geometry: str = "transverse-only"):
    logging.getLogger("ionquench.crystal").setLevel(logging.ERROR)
    return prepare(TrapScenario.from_dimensionless(g, delta, dipole_geometry=geometry))


def auto_grid(setup, t_max_us: float) -> np.ndarray:
    """Seconds grid on ``[0, t_max]`` at the density bound, as the CLI builds it."""
    return time_grid(ScenarioConfig(g=0.0, delta=0.0, t_max_us=t_max_us), setup)


@pytest.fixture(scope="session")
def setup_linear():
    return cached_setup(0.02)


@pytest.fixture(scope="session")
def setup_crossing():
    return cached_setup(-0.005)


@pytest.fixture(scope="session")
def setup_zigzag():
    return cached_setup(-0.1)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("abc")), k)):
        results = ACCEPTANCE[key]
        ok = all(p for p, _ in results)
        tr.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}")
        for p, detail in results:
            tr.write_line(f"    [{'ok' if p else 'xx'}] {detail}")

