"""Synthetic-map suite comparing the closed form with the Fock oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import special_ortho_group

from .fock_oracle import convergence_sweep
from .structure_map import BogoliubovMap, map_from_link
from .visibility import overlap_at

TOLERANCE = 1e-5


@dataclass(frozen=True)
class SyntheticCase:
    name: str
    bmap: BogoliubovMap
    occupations: np.ndarray
    kappa: np.ndarray
    kappa_p: np.ndarray
    t_list: tuple
    n_max_list: tuple


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def synthetic_cases() -> list:
    """Maps with 1-3 modes, thermal and vacuum states, with and without recoil-like kicks."""
    z1 = np.zeros(1, complex)
    z2 = np.zeros(2, complex)
    squeeze = map_from_link([[1.0]], [1.0], [2.0], [0.3])
    shifted = map_from_link([[1.0]], [1.7478], [1.7321], [2.04])
    rot = map_from_link(_rotation(0.4), [1.0, 1.6], [1.3, 1.2], [0.25, -0.15], energy_offset=0.37)
    T3 = special_ortho_group.rvs(3, random_state=7)
    three = map_from_link(T3, [0.8, 1.0, 1.4], [1.0, 1.1, 1.2], [0.1, -0.05, 0.08])
    ts = (0.0, 0.5, 1.0, 2.0)
    return [
        SyntheticCase("identity", map_from_link([[1.0]], [1.0], [1.0], [0.0]), np.array([0.5]), z1, z1, ts,
                      (24, 32, 40)),
        SyntheticCase("1-mode vacuum", squeeze, np.array([0.0]), z1, z1, ts, (24, 40, 60)),
        SyntheticCase("1-mode thermal", squeeze, np.array([0.5]), z1, z1, ts, (24, 40, 60)),
        SyntheticCase("1-mode thermal recoil", squeeze, np.array([0.5]), np.array([0.2j]), np.array([0.2j]), ts,
                      (24, 40, 60)),
        SyntheticCase("1-mode strongly displaced", shifted, np.array([0.761]), z1, z1, (0.7, 5.0, 34.78),
                      (60, 90, 130)),
        SyntheticCase("2-mode thermal recoil", rot, np.array([0.3, 0.2]), np.array([0.1j, -0.05j]),
                      np.array([0.12j, 0.02 - 0.05j]), ts, (16, 22, 30)),
        SyntheticCase("2-mode cold-mode reduction", rot, np.array([0.3, 0.0]), z2, z2, ts, (16, 22, 30)),
        SyntheticCase("3-mode thermal", three, np.array([0.1, 0.05, 0.02]), np.zeros(3, complex),
                      np.zeros(3, complex), (0.0, 0.7, 1.5), (10, 13, 16)),
        SyntheticCase("3-mode vacuum recoil", three, np.zeros(3), np.array([0.05j, 0.03j, -0.04j]),
                      np.array([0.05j, 0.03j, -0.04j]), (0.0, 0.7, 1.5), (6, 9, 12)),
    ]


def run_case(case: SyntheticCase) -> dict:
    sweep = convergence_sweep(case.bmap, case.occupations, case.t_list, case.n_max_list, case.kappa, case.kappa_p)
    closed = np.array([overlap_at(case.bmap, case.kappa, case.kappa_p, case.occupations, t) for t in case.t_list])
    dev = float(np.max(np.abs(closed - sweep["best"])))
    return {
        "name": case.name,
        "n_modes": case.bmap.n_modes,
        "max_deviation": dev,
        "converged": sweep["converged"],
        "differences": sweep["differences"],
        "passed": bool(sweep["converged"] and dev < TOLERANCE),
    }


def run_suite(cases=None) -> list:
    return [run_case(c) for c in (synthetic_cases() if cases is None else cases)]
