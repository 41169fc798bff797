"""Finite-window spectrum of the logarithmic visibility and its peaks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class Spectrum:
    """``S(w_n) = (1/T) int_0^T ln V(t) exp(-i w_n t) dt`` on ``w_n = 2 pi n / T``.

    Frequencies are angular, in rad/s, sorted ascending (negative ones included).
    """

    frequencies: np.ndarray
    values: np.ndarray
    floor_used: float
    window: tuple
    taper: str = "none"
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / (self.window[1] - self.window[0])


def _uniform_step(t) -> float:
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 3:
        raise ValueError("need a 1-D time grid with at least 3 samples")
    dt = np.diff(t)
    h = float(np.mean(dt))
    if h <= 0 or np.max(np.abs(dt - h)) > 1e-6 * h:
        raise ValueError("time grid is not uniform")
    return h


def log_spectrum_samples(t, visibility, floor: float = DEFAULT_FLOOR, taper: str = "none") -> tuple:
    """Trapezoid-rule transform of ``ln max(V, floor)``; returns ``(omega, S)``.

    With ``w_n T = 2 pi n`` the two endpoint weights fold into one sample, so
    the trapezoid sum is exactly a length ``M - 1`` DFT.
    """
    if not floor > 0:
        raise ValueError("floor must be positive")
    t = np.asarray(t, dtype=float)
    h = _uniform_step(t)
    f = np.log(np.maximum(np.asarray(visibility, dtype=float), floor))
    if f.shape != t.shape:
        raise ValueError("time grid and visibility differ in length")
    if taper == "hann":
        f = f * scipy.signal.windows.hann(f.size, sym=True)
    elif taper != "none":
        raise ValueError(f"unknown taper {taper!r}")
    span = t[-1] - t[0]
    g = f[:-1].copy()
    g[0] = 0.5 * (f[0] + f[-1])
    m = g.size
    omega = 2.0 * np.pi * np.fft.fftfreq(m, d=h)
    S = h * np.fft.fft(g) / span * np.exp(-1j * omega * t[0])
    order = np.argsort(omega, kind="stable")
    return omega[order], S[order]


def log_spectrum(trace, floor: float = DEFAULT_FLOOR, taper: str = "none") -> Spectrum:
    """Spectrum of a :class:`~ionquench.visibility.VisibilityTrace` (frequencies in rad/s)."""
    t = np.asarray(trace.times_s, dtype=float)
    omega, S = log_spectrum_samples(t, trace.visibility, floor, taper)
    if not np.all(np.isfinite(S)):
        raise ValueError("spectrum is not finite")
    meta = {"trace_fingerprint": trace.fingerprint, "n_samples": int(t.size)}
    return Spectrum(omega, S, float(floor), (float(t[0]), float(t[-1])), taper, meta)


def beat_frequency(basis_g, basis_e, frequency_scale: float = 1.0) -> float:
    """``|w_soft^e - w_soft^g|``, multiplied by ``frequency_scale`` (pass ``w_x`` for rad/s)."""
    wg = basis_g.frequencies[basis_g.soft_mode_index]
    we = basis_e.frequencies[basis_e.soft_mode_index]
    return float(abs(we - wg)) * frequency_scale


def find_peaks(spectrum: Spectrum, min_prominence: float = 1e-4) -> list:
    """Local maxima of ``|S|`` at positive frequency, tallest first, as ``(omega, height)`` pairs."""
    pos = spectrum.frequencies > 0
    w = spectrum.frequencies[pos]
    mag = np.abs(spectrum.values[pos])
    if mag.size < 3:
        return []
    idx, _ = scipy.signal.find_peaks(mag, prominence=min_prominence)
    peaks = [(float(w[i]), float(mag[i])) for i in idx]
    peaks.sort(key=lambda p: -p[1])
    return peaks


def write_spectrum_csv(spectrum: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["omega_rad_per_s", "re_S", "im_S", "abs_S"])
        for w, s in zip(spectrum.frequencies, spectrum.values):
            writer.writerow([repr(float(w)), repr(float(s.real)), repr(float(s.imag)), repr(float(abs(s)))])
