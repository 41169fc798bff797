import numpy as np
import pytest
import scipy.constants as sc

from conftest import auto_grid, cached_setup
from ionquench.errors import BranchTrackingError
from ionquench.structure_map import RecoilSpec, map_from_link
from ionquench.visibility import (TemperatureSpec, ThermalSpec, branch_max_step, check_branch_continuity,
                                  check_grid, fingerprint, overlap_at, overlap_series, overlap_zero_T, prepare,
                                  ramsey_probability, resolve_thermal, thermal_occupation, visibility_trace)


def test_thermal_occupation_formula():
    w = 2 * np.pi * 0.2191e6
    x = sc.hbar * w / (sc.k * 100e-6)
    assert thermal_occupation(w, 100e-6) == pytest.approx(1 / (np.exp(x) - 1), rel=1e-12)
    assert thermal_occupation(w, 0.0) == 0.0
    np.testing.assert_array_equal(thermal_occupation(np.array([w, 2 * w]), 0.0), [0.0, 0.0])
    with pytest.raises(ValueError):
        thermal_occupation(-1.0, 1e-6)
    with pytest.raises(ValueError):
        thermal_occupation(w, -1e-6)


def test_thermal_spec_validation_and_sources():
    with pytest.raises(ValueError):
        ThermalSpec(np.array([-0.1]))
    spec = ThermalSpec.from_mode_temperatures(np.array([1e6, 2e6]), [1e-6, 0.0])
    assert spec.mode_temperatures == (1e-6, 0.0)
    np.testing.assert_array_equal(spec.hot_mask, [True, False])
    assert ThermalSpec.zero(3).temperature == 0.0


def test_temperature_spec_overrides_soft_mode(setup_linear):
    th = resolve_thermal(TemperatureSpec(100e-6, soft_mode_temperature=10e-6), setup_linear)
    soft = setup_linear.basis_g.soft_mode_index
    w = setup_linear.omega_g_si
    assert th.mode_occupations[soft] == pytest.approx(thermal_occupation(w[soft], 10e-6))
    others = np.delete(np.arange(6), soft)
    np.testing.assert_allclose(th.mode_occupations[others], thermal_occupation(w[others], 100e-6))
    with pytest.raises(ValueError):
        TemperatureSpec(-1.0)
    with pytest.raises(ValueError):
        resolve_thermal(ThermalSpec(np.zeros(2)), setup_linear)


def test_pure_displacement_closed_form():
    beta, w = 0.7, 1.3
    m = map_from_link([[1.0]], [w], [w], [beta])
    for t in (0.3, 1.1, 4.0):
        assert overlap_at(m, None, None, np.zeros(1), t) == pytest.approx(np.exp(beta**2 * (np.exp(-1j * w * t) - 1)),
                                                                          abs=1e-13)
        hot = abs(overlap_at(m, None, None, np.array([0.4]), t))
        assert hot == pytest.approx(np.exp(-beta**2 * (1 - np.cos(w * t)) * 1.8), abs=1e-13)


def test_zero_temperature_shortcut_agrees(setup_crossing):
    m = setup_crossing.bmap
    for t in (0.0, 3.0, 17.0):
        assert overlap_zero_T(m, setup_crossing.kappa, setup_crossing.kappa_p, t) == pytest.approx(
            overlap_at(m, setup_crossing.kappa, setup_crossing.kappa_p, np.zeros(6), t), abs=1e-12)


def test_series_matches_single_time_path(setup_zigzag):
    m = setup_zigzag.bmap
    occ = np.linspace(0.0, 0.8, 6)
    ts = np.linspace(0.0, 12.0, 241)
    series, root = overlap_series(m, None, None, occ, ts)
    single = np.array([overlap_at(m, None, None, occ, t) for t in ts[::40]])
    np.testing.assert_allclose(series[::40], single, atol=1e-12)
    assert branch_max_step(root) < np.pi / 2


def test_no_dipole_shift_gives_flat_visibility():
    s = cached_setup(0.02, 0.0)
    tr = visibility_trace(s.scenario, 50e-6, None, auto_grid(s, 5.0), setup=s)
    np.testing.assert_allclose(tr.visibility, 1.0, atol=1e-12)


def test_trace_metadata_and_fingerprint(setup_linear):
    t = auto_grid(setup_linear, 3.0)
    a = visibility_trace(setup_linear.scenario, 10e-6, None, t, setup=setup_linear)
    b = visibility_trace(setup_linear.scenario, 10e-6, None, t, setup=setup_linear, threads=3)
    c = visibility_trace(setup_linear.scenario, 20e-6, None, t, setup=setup_linear)
    np.testing.assert_array_equal(a.overlap, b.overlap)
    assert a.fingerprint == b.fingerprint != c.fingerprint
    assert a.overlap[0] == pytest.approx(1.0, abs=1e-14)
    for key in ("structure_g", "omega_g", "mode_occupations", "map", "branch_max_step", "kernel"):
        assert key in a.metadata
    p = a.ramsey_probability(0.0)
    assert np.all((p >= -1e-12) & (p <= 1 + 1e-12))
    np.testing.assert_allclose(ramsey_probability(a.overlap, np.pi), 1 - p, atol=1e-15)


def test_recoil_reduces_initial_overlap():
    scenario = cached_setup(0.02).scenario
    counter = RecoilSpec.preset("counterpropagating", 313e-9)
    setup = prepare(scenario, counter)
    tr = visibility_trace(scenario, None, None, auto_grid(setup, 2.0), setup=setup)
    # same kick from both pulses: the overlap starts at 1 and drops as the modes move
    assert tr.overlap[0] == pytest.approx(1.0, abs=1e-12)
    assert tr.visibility.min() < 1.0 - 1e-6


def test_grid_checks():
    with pytest.raises(ValueError):
        check_grid(np.array([0.0, 1.0]), 1.0)  # too coarse
    with pytest.raises(ValueError):
        check_grid(np.array([0.0, 0.01, 0.005]), 1.0)  # not increasing
    with pytest.raises(ValueError):
        check_grid(np.array([]), 1.0)
    check_grid(np.linspace(0, 1, 21), 1.0)


def test_trace_requires_grid(setup_linear):
    with pytest.raises(ValueError):
        visibility_trace(setup_linear.scenario, setup=setup_linear)


def test_branch_continuity_detects_jumps():
    smooth = np.exp(1j * np.linspace(0, 4 * np.pi, 200))
    check_branch_continuity(smooth)
    jump = smooth.copy()
    jump[100:] *= -1
    with pytest.raises(BranchTrackingError):
        check_branch_continuity(jump)


def test_fingerprint_is_canonical():
    a = fingerprint({"x": np.array([1.0, 2.0]), "z": 1 + 2j, "b": [1, 2]})
    b = fingerprint({"b": [1, 2], "z": 1 + 2j, "x": np.array([1.0, 2.0])})
    assert a == b and len(a) == 64
