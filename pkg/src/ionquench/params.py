"""Physical constants, unit conversion and the (g, Delta) quench parametrization.

Everything downstream works in dimensionless units: lengths in units of
``ell = (q^2 / (4 pi eps0 m w_x^2))^(1/3)``, angular frequencies in units of
the angular axial frequency ``w_x = 2 pi nu_x``, masses in units of the ion
mass.  In these units the reduced Planck constant becomes the small number
``hbar / (m ell^2 w_x)`` which is carried around as ``UnitSystem.hbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import constants as sc

AMU = sc.physical_constants["atomic mass constant"][0]
HBAR = sc.hbar
KB = sc.k
E_CHARGE = sc.e
EPS0 = sc.epsilon_0

# exact for the 3-ion chain
CRITICAL_RATIO_N3 = math.sqrt(12.0 / 5.0)


class DipoleGeometry(str, Enum):
    """How the state-dependent trap shift acts on the central ion."""

    TRANSVERSE_ONLY = "transverse-only"
    ISOTROPIC_PLANAR = "isotropic-planar"


@dataclass(frozen=True)
class IonSpecies:
    mass: float  # kg
    charge: float  # C
    label: str
    transition_wavelength: float  # m

    def __post_init__(self):
        if not (self.mass > 0 and self.charge > 0 and self.transition_wavelength > 0):
            raise ValueError(f"invalid ion species {self!r}")


BE9 = IonSpecies(
    mass=9.0121830 * AMU - sc.m_e,
    charge=E_CHARGE,
    label="Be9+",
    transition_wavelength=313e-9,
)

SPECIES = {BE9.label: BE9, "Be9": BE9}


@dataclass(frozen=True)
class UnitSystem:
    """Scales for converting dimensionless quantities back to SI."""

    length_scale: float  # m
    frequency_scale: float  # rad/s
    energy_scale: float  # J
    hbar: float  # dimensionless hbar / (m ell^2 w_x)

    @classmethod
    def for_trap(cls, species: IonSpecies, nu_x: float) -> "UnitSystem":
        w = 2.0 * math.pi * nu_x
        ell = (species.charge**2 / (4.0 * math.pi * EPS0 * species.mass * w**2)) ** (1.0 / 3.0)
        energy = species.mass * w**2 * ell**2
        return cls(ell, w, energy, HBAR / (species.mass * ell**2 * w))

    def length_to_si(self, x):
        return np.asarray(x) * self.length_scale

    def length_from_si(self, x):
        return np.asarray(x) / self.length_scale

    def angular_to_si(self, w):
        return np.asarray(w) * self.frequency_scale

    def angular_from_si(self, w):
        return np.asarray(w) / self.frequency_scale

    def time_to_si(self, t):
        return np.asarray(t) / self.frequency_scale

    def time_from_si(self, t):
        return np.asarray(t) * self.frequency_scale


@dataclass(frozen=True)
class TrapScenario:
    """Static anisotropic planar trap plus the state-dependent shift on the central ion.

    Frequencies are ordinary frequencies in Hz (i.e. ``nu / 2 pi`` of the
    angular value).
    """

    n_ions: int
    nu_x: float
    nu_y: float
    nu_dip: float = 0.0
    dipole_geometry: DipoleGeometry = DipoleGeometry.TRANSVERSE_ONLY
    species: IonSpecies = field(default=BE9)

    def __post_init__(self):
        if self.n_ions < 3 or self.n_ions % 2 == 0:
            raise ValueError(f"n_ions must be odd and >= 3 (got {self.n_ions})")
        if not (self.nu_x > 0 and self.nu_y > 0):
            raise ValueError("trap frequencies must be positive")
        if self.nu_dip < 0:
            raise ValueError("nu_dip must be non-negative")
        object.__setattr__(self, "dipole_geometry", DipoleGeometry(self.dipole_geometry))

    @property
    def central_ion(self) -> int:
        return (self.n_ions - 1) // 2

    @property
    def units(self) -> UnitSystem:
        return UnitSystem.for_trap(self.species, self.nu_x)

    @property
    def transverse_ratio(self) -> float:
        return self.nu_y / self.nu_x

    @property
    def dipole_ratio(self) -> float:
        return self.nu_dip / self.nu_x

    @classmethod
    def from_dimensionless(
        cls,
        g: float,
        delta: float,
        *,
        n_ions: int = 3,
        nu_x: float = 1e6,
        dipole_geometry=DipoleGeometry.TRANSVERSE_ONLY,
        species: IonSpecies = BE9,
    ) -> "TrapScenario":
        nu_y, nu_dip = from_dimensionless(g, delta, n_ions=n_ions, nu_x=nu_x)
        return cls(n_ions, nu_x, nu_y, nu_dip, DipoleGeometry(dipole_geometry), species)

    def with_dimensionless(self, g: float | None = None, delta: float | None = None) -> "TrapScenario":
        g0, d0 = to_dimensionless(self)
        nu_y, nu_dip = from_dimensionless(
            g0 if g is None else g, d0 if delta is None else delta, n_ions=self.n_ions, nu_x=self.nu_x
        )
        return replace(self, nu_y=nu_y, nu_dip=nu_dip)


def _linear_chain_axial(n: int) -> np.ndarray:
    """Dimensionless axial equilibrium positions of a linear chain."""
    from .crystal import linear_chain_positions

    return linear_chain_positions(n)


def _transverse_coulomb_max(n: int) -> float:
    """Largest eigenvalue of the transverse Coulomb coupling matrix of the linear chain.

    The transverse Hessian of the linear chain is ``gamma^2 I - K``; it only
    serves as the bracket for the bisection.
    """
    x = _linear_chain_axial(n)
    dx = np.abs(x[:, None] - x[None, :])
    np.fill_diagonal(dx, np.inf)
    k = 1.0 / dx**3
    k_full = np.diag(k.sum(axis=1)) - k
    return float(np.linalg.eigvalsh(k_full)[-1])


def critical_ratio(n_ions: int, method: str = "auto", rtol: float = 1e-10) -> float:
    """Critical ``nu_y / nu_x`` at which the linear chain buckles.

    ``method='analytic'`` is only available for three ions.  The numerical
    path bisects the lowest transverse eigenfrequency of the linear chain.
    """
    if method == "analytic" or (method == "auto" and n_ions == 3):
        if n_ions != 3:
            raise ValueError("analytic critical frequency is only known for n_ions = 3")
        return CRITICAL_RATIO_N3
    if method not in ("auto", "numerical"):
        raise ValueError(f"unknown method {method!r}")

    from .crystal import linear_chain_positions, potential_hessian

    x = linear_chain_positions(n_ions)
    pos = np.concatenate([x, np.zeros(n_ions)])

    def soft(gamma: float) -> float:
        h = potential_hessian(pos, gamma, 0.0, None, "transverse-only")
        return float(np.linalg.eigvalsh(h[n_ions:, n_ions:])[0])

    lo, hi = 0.5, 2.0 * math.sqrt(_transverse_coulomb_max(n_ions)) + 1.0
    assert soft(lo) < 0 < soft(hi)
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if soft(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def critical_frequency(scenario: TrapScenario | None = None, *, n_ions: int | None = None,
                       nu_x: float | None = None, method: str = "auto") -> float:
    """Critical transverse frequency ``nu_c`` in Hz."""
    if scenario is not None:
        n_ions, nu_x = scenario.n_ions, scenario.nu_x
    if n_ions is None or nu_x is None:
        raise ValueError("need a scenario or both n_ions and nu_x")
    return critical_ratio(n_ions, method) * nu_x


def to_dimensionless(scenario: TrapScenario) -> tuple[float, float]:
    """Return ``(g, Delta)`` for a scenario."""
    nu_c = critical_frequency(scenario)
    g = (scenario.nu_y**2 - nu_c**2) / nu_c**2
    delta = scenario.nu_dip**2 / nu_c**2
    return g, delta


def from_dimensionless(g: float, delta: float, *, n_ions: int = 3, nu_x: float = 1e6) -> tuple[float, float]:
    """Inverse of :func:`to_dimensionless`; returns ``(nu_y, nu_dip)`` in Hz."""
    if g <= -1.0:
        raise ValueError("g must exceed -1")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    nu_c = critical_frequency(n_ions=n_ions, nu_x=nu_x)
    return nu_c * math.sqrt(1.0 + g), nu_c * math.sqrt(delta)
