"""Bogoliubov/displacement map between the phonon bases of the two structures."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .crystal import CrystalStructure, ModeBasis
from .errors import MapError

COND_LIMIT = 1e12
ASYM_TOL = 1e-9


@dataclass(frozen=True)
class BogoliubovMap:
    """Linear map ``b_g = u b_e - v b_e^dag + beta_g`` and its derived objects.

    ``energy_offset`` is the difference of the constant parts of the two
    Hamiltonians (excited minus ground, dimensionless).  The overlap picks up
    ``exp(-i energy_offset t)``; maps built from crystal structures use 0,
    i.e. the overlap is reported in the frame rotating at the bare
    ground-energy difference.
    """

    omega_g: np.ndarray
    omega_e: np.ndarray
    T: np.ndarray
    D_g: np.ndarray
    u: np.ndarray
    v: np.ndarray
    beta_g: np.ndarray
    beta_e: np.ndarray
    A: np.ndarray
    Z: float
    d_g: np.ndarray | None = None
    energy_offset: float = 0.0
    cond_u: float = 1.0
    asymmetry: float = 0.0

    @property
    def n_modes(self) -> int:
        return self.omega_g.size

    def summary(self) -> dict:
        return {
            "n_modes": int(self.n_modes),
            "Z": float(self.Z),
            "cond_u": float(self.cond_u),
            "A_asymmetry": float(self.asymmetry),
            "A_spectral_radius": float(np.max(np.abs(np.linalg.eigvalsh(self.A)))) if self.n_modes else 0.0,
            "max_abs_v": float(np.max(np.abs(self.v))) if self.n_modes else 0.0,
            "beta_g": [float(b) for b in self.beta_g],
            "beta_e": [float(b) for b in self.beta_e],
        }


def bogoliubov_coefficients(T, omega_g, omega_e):
    r = np.sqrt(np.asarray(omega_e)[None, :] / np.asarray(omega_g)[:, None])
    u = 0.5 * T * (r + 1.0 / r)
    v = 0.5 * T * (r - 1.0 / r)
    return u, v


def map_from_link(T, omega_g, omega_e, beta_g, *, d_g=None, D_g=None, energy_offset=0.0) -> BogoliubovMap:
    """Build the full map from the mode-link matrix, frequencies and ground displacements.

    Usable directly for synthetic few-mode maps.
    """
    T = np.atleast_2d(np.asarray(T, dtype=float))
    omega_g = np.atleast_1d(np.asarray(omega_g, dtype=float))
    omega_e = np.atleast_1d(np.asarray(omega_e, dtype=float))
    beta_g = np.atleast_1d(np.asarray(beta_g, dtype=float))
    u, v = bogoliubov_coefficients(T, omega_g, omega_e)

    cond = float(np.linalg.cond(u))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise MapError(f"u is singular (condition number {cond:.3e})")
    A = np.linalg.solve(u, v)
    scale = max(1.0, float(np.max(np.abs(A))))
    asym = float(np.max(np.abs(A - A.T))) / scale
    if asym > ASYM_TOL:
        raise MapError(f"A = u^-1 v is not symmetric (asymmetry {asym:.3e})")
    A = 0.5 * (A + A.T)
    a_eig = np.linalg.eigvalsh(A)
    if a_eig.size and np.max(np.abs(a_eig)) >= 1.0:
        raise MapError("spectral radius of A is not below 1")
    Z = float(np.prod((1.0 - a_eig**2) ** 0.25))

    beta_e = -(u + v).T @ beta_g
    if D_g is None:
        D_g = beta_g / np.sqrt(omega_g / 2.0)
    return BogoliubovMap(
        omega_g=omega_g,
        omega_e=omega_e,
        T=T,
        D_g=np.asarray(D_g, dtype=float),
        u=u,
        v=v,
        beta_g=beta_g,
        beta_e=beta_e,
        A=A,
        Z=Z,
        d_g=None if d_g is None else np.asarray(d_g, dtype=float),
        energy_offset=float(energy_offset),
        cond_u=cond,
        asymmetry=asym,
    )


def build_map(basis_g: ModeBasis, basis_e: ModeBasis, struct_g: CrystalStructure, struct_e: CrystalStructure,
              hbar: float) -> BogoliubovMap:
    """Map between the two structures' phonon bases.

    ``hbar`` is the dimensionless Planck constant of the trap's unit system;
    it sets the zero-point length that converts the classical equilibrium
    shift into the phase-space displacement ``beta_g``.
    """
    Mg, Me = basis_g.mode_matrix, basis_e.mode_matrix
    T = Mg.T @ Me
    d_g = struct_e.positions - struct_g.positions
    D_g = Mg.T @ d_g
    beta_g = np.sqrt(basis_g.frequencies / (2.0 * hbar)) * D_g
    return map_from_link(T, basis_g.frequencies, basis_e.frequencies, beta_g, d_g=d_g, D_g=D_g)


def displacement_phase(lambda_g, bmap: BogoliubovMap):
    """Phase of ``D_g(lambda) = exp(i phi) D_e(lambda_e)``; returns ``(phi, lambda_e)``."""
    lam = np.asarray(lambda_g, dtype=complex)
    phi = 2.0 * float(np.imag(np.sum(lam * bmap.beta_g)))
    lam_e = bmap.u.T @ lam + bmap.v.T @ np.conj(lam)
    return phi, lam_e


def evolve_lambda(lambda_g, bmap: BogoliubovMap, t: float) -> np.ndarray:
    """Excited-basis image of the freely evolved ground coherent amplitude."""
    lam = np.asarray(lambda_g, dtype=complex) * np.exp(-1j * bmap.omega_g * t)
    return bmap.u.T @ lam + bmap.v.T @ np.conj(lam)


# ---------------------------------------------------------------------------
# photon recoil
# ---------------------------------------------------------------------------


class RecoilGeometry(str, Enum):
    NONE = "none"
    COPROPAGATING = "copropagating"
    ORTHOGONAL = "orthogonal"
    COUNTERPROPAGATING = "counterpropagating"
    EXPLICIT = "explicit"


_PRESET_FACTOR = {
    RecoilGeometry.NONE: 0.0,
    RecoilGeometry.COPROPAGATING: 0.0,
    RecoilGeometry.ORTHOGONAL: np.sqrt(2.0),
    RecoilGeometry.COUNTERPROPAGATING: 2.0,
}


@dataclass(frozen=True)
class RecoilSpec:
    """Effective wave vectors (1/m, planar ``(k_x, k_y)``) of the two Ramsey pulses."""

    geometry: RecoilGeometry = RecoilGeometry.NONE
    k_first: np.ndarray = field(default_factory=lambda: np.zeros(2))
    k_second: np.ndarray = field(default_factory=lambda: np.zeros(2))
    target_ion: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "geometry", RecoilGeometry(self.geometry))
        for name in ("k_first", "k_second"):
            k = np.asarray(getattr(self, name), dtype=float).reshape(2)
            if not np.all(np.isfinite(k)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, k)

    @classmethod
    def preset(cls, geometry, wavelength: float, target_ion: int | None = None) -> "RecoilSpec":
        """Beams along the transverse axis; both pulses impart the same wave vector."""
        geometry = RecoilGeometry(geometry)
        if geometry is RecoilGeometry.EXPLICIT:
            raise ValueError("explicit geometry needs wave vectors")
        k0 = 2.0 * np.pi / wavelength
        k = np.array([0.0, _PRESET_FACTOR[geometry] * k0])
        return cls(geometry, k, k.copy(), target_ion)

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.k_first) or np.any(self.k_second))


def recoil_displacement(spec: RecoilSpec, basis_e: ModeBasis, which_pulse: int, length_scale: float,
                        hbar: float, target_ion: int | None = None) -> np.ndarray:
    """Per-mode coherent displacement ``kappa`` from the photon recoil of one pulse.

    ``length_scale`` converts the SI wave vector into inverse dimensionless
    lengths; ``hbar`` is the dimensionless Planck constant.
    """
    n_modes = basis_e.n_modes
    if which_pulse in (1, "first"):
        k = spec.k_first
    elif which_pulse in (2, "second"):
        k = spec.k_second
    else:
        raise ValueError("which_pulse must be 1/'first' or 2/'second'")
    if not np.any(k):
        return np.zeros(n_modes, dtype=complex)
    n_ions = n_modes // 2
    j0 = spec.target_ion if spec.target_ion is not None else target_ion
    if j0 is None:
        j0 = (n_ions - 1) // 2
    if not 0 <= j0 < n_ions:
        raise ValueError(f"target ion {j0} out of range")
    k_dimless = np.asarray(k) * length_scale
    M = basis_e.mode_matrix
    K = k_dimless[0] * M[j0, :] + k_dimless[1] * M[n_ions + j0, :]
    return 1j * np.sqrt(hbar / (2.0 * basis_e.frequencies)) * K
