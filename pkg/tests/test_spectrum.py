import csv

import numpy as np
import pytest

from conftest import auto_grid, cached_setup
from ionquench.spectrum import (Spectrum, beat_frequency, find_peaks, log_spectrum, log_spectrum_samples,
                                write_spectrum_csv)
from ionquench.visibility import visibility_trace


def direct_trapezoid(t, f, omega):
    """Reference: trapezoid quadrature of f(t) exp(-i w t) evaluated one frequency at a time."""
    span = t[-1] - t[0]
    return np.array([np.trapezoid(f * np.exp(-1j * w * t), t) / span for w in omega])


def test_fft_route_equals_direct_quadrature():
    rng = np.random.default_rng(0)
    t = np.linspace(2.0, 7.0, 101)
    V = np.exp(-0.3 * rng.random(t.size))
    omega, S = log_spectrum_samples(t, V)
    np.testing.assert_allclose(S, direct_trapezoid(t, np.log(V), omega), atol=1e-13)


def test_pure_tone_lands_on_its_bin():
    T, m, a = 10.0, 7, 0.4
    t = np.linspace(0, T, 513)
    w0 = 2 * np.pi * m / T
    omega, S = log_spectrum_samples(t, np.exp(a * np.cos(w0 * t)))
    k = int(np.argmin(np.abs(omega - w0)))
    assert S[k] == pytest.approx(a / 2, abs=1e-12)
    others = np.delete(np.arange(omega.size), [k, int(np.argmin(np.abs(omega + w0)))])
    assert np.max(np.abs(S[others])) < 1e-12


def test_floor_and_taper():
    t = np.linspace(0, 1, 65)
    V = np.ones_like(t)
    V[10] = 0.0
    _, S = log_spectrum_samples(t, V, floor=1e-6)
    assert np.isfinite(S).all()
    _, S_hann = log_spectrum_samples(t, V, floor=1e-6, taper="hann")
    assert not np.allclose(S, S_hann)
    with pytest.raises(ValueError):
        log_spectrum_samples(t, V, floor=0.0)
    with pytest.raises(ValueError):
        log_spectrum_samples(t, V, taper="kaiser")


def test_rejects_non_uniform_grid():
    t = np.array([0.0, 0.1, 0.3, 0.4])
    with pytest.raises(ValueError):
        log_spectrum_samples(t, np.ones(4))
    with pytest.raises(ValueError):
        log_spectrum_samples(np.linspace(0, 1, 5), np.ones(4))


def test_flat_spectrum_without_dipole_shift():
    s = cached_setup(0.02, 0.0)
    spec = log_spectrum(visibility_trace(s.scenario, 50e-6, None, auto_grid(s, 10.0), setup=s))
    assert np.max(np.abs(spec.values)) < 1e-12
    assert find_peaks(spec) == []


def test_spectrum_units_and_peaks(setup_crossing):
    tr = visibility_trace(setup_crossing.scenario, None, None, auto_grid(setup_crossing, 60.0), setup=setup_crossing)
    spec = log_spectrum(tr)
    assert spec.spacing == pytest.approx(2 * np.pi / 60e-6)
    assert np.all(np.diff(spec.frequencies) > 0)
    peaks = find_peaks(spec)
    heights = [h for _, h in peaks]
    assert heights == sorted(heights, reverse=True)
    assert all(w > 0 for w, _ in peaks)


def test_harmonic_count_grows_with_temperature(setup_linear):
    t = auto_grid(setup_linear, 60.0)
    wx = setup_linear.units.frequency_scale
    w_beat = beat_frequency(setup_linear.basis_g, setup_linear.basis_e, wx)
    counts = []
    for T in (10e-6, 100e-6):
        spec = log_spectrum(visibility_trace(setup_linear.scenario, T, None, t, setup=setup_linear))
        ws = [w for w, _ in find_peaks(spec)]
        counts.append(sum(any(abs(w - k * w_beat) <= spec.spacing for w in ws) for k in range(2, 8)))
    assert counts[1] >= counts[0]


def test_beat_frequency_scales(setup_linear):
    b = beat_frequency(setup_linear.basis_g, setup_linear.basis_e)
    assert b == pytest.approx(0.07699, abs=1e-4)
    assert beat_frequency(setup_linear.basis_g, setup_linear.basis_e, 2.0) == pytest.approx(2 * b)


def test_csv_round_trip(tmp_path):
    spec = Spectrum(np.array([-1.0, 0.0, 1.0]), np.array([0.1j, 0.5, -0.1j]), 1e-12, (0.0, 1.0))
    path = tmp_path / "s.csv"
    write_spectrum_csv(spec, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["omega_rad_per_s", "re_S", "im_S", "abs_S"]
    assert float(rows[1][2]) == 0.1 and float(rows[2][3]) == 0.5
