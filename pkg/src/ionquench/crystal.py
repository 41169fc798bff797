"""Classical equilibrium structures and normal modes of a planar ion crystal.

Coordinates are dimensionless (see :mod:`ionquench.params`) and stored as a
single ``2N`` vector: all axial ``x`` first, then all transverse ``y``, with
ions sorted by axial position.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .errors import CoincidentIonsError, ConvergenceError, NearCriticalError, SaddleError
from .params import DipoleGeometry, TrapScenario

log = logging.getLogger(__name__)

GRAD_TOL = 1e-10
MAX_NEWTON = 200
MAX_HALVINGS = 40
SEED_KICK = 1e-3
LINEAR_TOL = 1e-7
MIN_FREQUENCY = 0.05  # validity guard, in units of the axial frequency
ZIGZAG_CORRELATION = 0.9


class InternalState(str, Enum):
    G = "g"
    E = "e"


class StructureLabel(str, Enum):
    LINEAR = "linear"
    ZIGZAG_UP = "zigzag-up"
    ZIGZAG_DOWN = "zigzag-down"


@dataclass(frozen=True)
class CrystalStructure:
    internal_state: InternalState
    positions: np.ndarray
    classical_energy: float
    structure_label: StructureLabel
    iterations: int = 0
    gradient_norm: float = 0.0
    energy_history: tuple = field(default=(), repr=False)

    @property
    def n_ions(self) -> int:
        return self.positions.size // 2

    @property
    def x(self) -> np.ndarray:
        return self.positions[: self.n_ions]

    @property
    def y(self) -> np.ndarray:
        return self.positions[self.n_ions:]


@dataclass(frozen=True)
class ModeBasis:
    internal_state: InternalState
    frequencies: np.ndarray
    mode_matrix: np.ndarray
    soft_mode_index: int
    soft_mode_fallback: bool = False
    soft_mode_correlation: float = 1.0

    @property
    def n_modes(self) -> int:
        return self.frequencies.size


def _trap_coefficients(gamma: float, dip: float, central: int | None, geometry, n: int) -> np.ndarray:
    """Diagonal of the harmonic trap curvature in the (x..., y...) layout."""
    k = np.concatenate([np.ones(n), np.full(n, gamma**2)])
    if central is not None and dip > 0.0:
        k[n + central] += dip**2
        if DipoleGeometry(geometry) is DipoleGeometry.ISOTROPIC_PLANAR:
            k[central] += dip**2
    return k


def _terms(positions, gamma, dip, central, geometry):
    positions = np.asarray(positions, dtype=float)
    n = positions.size // 2
    k = _trap_coefficients(gamma, dip, central, geometry, n)
    try:
        ec, gc, hc = _kernels.coulomb_terms(positions)
    except ZeroDivisionError as exc:
        raise CoincidentIonsError("two ions coincide") from exc
    energy = 0.5 * float(np.dot(k, positions**2)) + float(ec)
    grad = k * positions + gc
    hess = np.diag(k) + hc
    return energy, grad, hess


def potential_hessian(positions, gamma, dip, central, geometry) -> np.ndarray:
    return _terms(positions, gamma, dip, central, geometry)[2]


def _state_args(scenario: TrapScenario, internal_state):
    state = InternalState(internal_state)
    central = scenario.central_ion if state is InternalState.E else None
    return scenario.transverse_ratio, scenario.dipole_ratio, central, scenario.dipole_geometry


def total_potential(positions, scenario: TrapScenario, internal_state):
    """Energy, exact gradient and Hessian of trap + dipole + Coulomb potential.

    The central-ion dipole term only contributes for ``internal_state='e'``.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.size != 2 * scenario.n_ions:
        raise ValueError("positions must have length 2N")
    return _terms(positions, *_state_args(scenario, internal_state))


def linear_chain_positions(n: int, tol: float = 1e-13) -> np.ndarray:
    """Axial equilibrium of an ``n``-ion string in a unit harmonic well."""
    x = np.linspace(-1.0, 1.0, n) * (0.5 * n) ** (2.0 / 3.0)
    for _ in range(100):
        d = x[:, None] - x[None, :]
        np.fill_diagonal(d, np.inf)
        grad = x - np.sum(np.sign(d) / d**2, axis=1)
        k = 2.0 / np.abs(d) ** 3
        hess = -k
        np.fill_diagonal(hess, 1.0 + k.sum(axis=1))
        step = np.linalg.solve(hess, grad)
        x = x - step
        if np.max(np.abs(grad)) < tol:
            break
    return np.sort(x)


def _label(positions: np.ndarray, central: int) -> StructureLabel:
    n = positions.size // 2
    y = positions[n:]
    if np.max(np.abs(y)) < LINEAR_TOL:
        return StructureLabel.LINEAR
    return StructureLabel.ZIGZAG_UP if y[central] > 0 else StructureLabel.ZIGZAG_DOWN


def _sort_axial(positions: np.ndarray) -> np.ndarray:
    n = positions.size // 2
    order = np.argsort(positions[:n], kind="stable")
    return np.concatenate([positions[:n][order], positions[n:][order]])


def zigzag_vector(n: int, gamma: float) -> np.ndarray:
    """Soft transverse eigenvector of the linear chain, central-ion component positive."""
    x = linear_chain_positions(n)
    pos = np.concatenate([x, np.zeros(n)])
    h = potential_hessian(pos, gamma, 0.0, None, DipoleGeometry.TRANSVERSE_ONLY)
    w, v = np.linalg.eigh(h[n:, n:])
    vec = v[:, 0]
    c = (n - 1) // 2
    if vec[c] < 0:
        vec = -vec
    out = np.zeros(2 * n)
    out[n:] = vec
    return out


def _newton(x0, fun):
    x = np.array(x0, dtype=float)
    energy, grad, hess = fun(x)
    history = [energy]
    for it in range(MAX_NEWTON):
        gnorm = float(np.linalg.norm(grad))
        if gnorm < GRAD_TOL:
            return x, energy, grad, hess, it, history
        w, v = np.linalg.eigh(hess)
        # modified Newton: flip negative curvature so that saddles are escaped
        w_mod = np.maximum(np.abs(w), 1e-8)
        step = -v @ ((v.T @ grad) / w_mod)
        slope = float(grad @ step)
        s = 1.0
        for _ in range(MAX_HALVINGS):
            trial = x + s * step
            try:
                e_new, g_new, h_new = fun(trial)
            except CoincidentIonsError:
                s *= 0.5
                continue
            armijo = e_new <= energy + 1e-4 * s * slope
            # close to the minimum the energy change drowns in round-off
            flat = abs(e_new - energy) <= 1e-14 * max(1.0, abs(energy)) and np.linalg.norm(g_new) < gnorm
            if armijo or flat:
                break
            s *= 0.5
        else:
            raise ConvergenceError(f"line search failed at iteration {it} (|grad| = {gnorm:.3e})")
        x, energy, grad, hess = trial, e_new, g_new, h_new
        history.append(energy)
    gnorm = float(np.linalg.norm(grad))
    if gnorm < GRAD_TOL:
        return x, energy, grad, hess, MAX_NEWTON, history
    raise ConvergenceError(f"Newton did not converge in {MAX_NEWTON} iterations (|grad| = {gnorm:.3e})")


def find_equilibrium(scenario: TrapScenario, internal_state, seed: CrystalStructure | None = None) -> CrystalStructure:
    """Minimise the potential for one internal state of the central ion.

    Without a seed the search starts from the linear string; when the trap is
    below the critical point the string is kicked along its zigzag
    eigenvector with the central ion displaced towards +y.  With a seed the
    search starts at the seed positions and the returned minimum is the
    mirror partner with the larger transverse overlap with the seed.
    """
    from .params import critical_ratio

    state = InternalState(internal_state)
    n = scenario.n_ions
    args = _state_args(scenario, state)
    central = scenario.central_ion
    gamma = scenario.transverse_ratio

    if seed is not None:
        x0 = np.array(seed.positions, dtype=float)
        if seed.structure_label is not StructureLabel.LINEAR:
            # keep a finite kick so a seeded zigzag never sits exactly on a saddle
            x0 = x0 + SEED_KICK * np.sign(seed.y[central] or 1.0) * zigzag_vector(n, gamma)
    else:
        x0 = np.concatenate([linear_chain_positions(n), np.zeros(n)])
        if gamma < critical_ratio(n):
            x0 = x0 + SEED_KICK * zigzag_vector(n, gamma)

    x, energy, grad, hess, iters, history = _newton(x0, lambda p: _terms(p, *args))
    x = _sort_axial(x)
    if seed is not None and float(np.dot(x[n:], seed.y)) < 0:
        x[n:] = -x[n:]
    elif seed is None and x[n + central] < -LINEAR_TOL:
        x[n:] = -x[n:]
    energy, grad, hess = _terms(x, *args)
    wmin = float(np.linalg.eigvalsh(hess)[0])
    if wmin < 0:
        raise SaddleError(f"stationary point has Hessian eigenvalue {wmin:.3e}")
    return CrystalStructure(
        internal_state=state,
        positions=x,
        classical_energy=energy,
        structure_label=_label(x, central),
        iterations=iters,
        gradient_norm=float(np.linalg.norm(grad)),
        energy_history=tuple(history),
    )


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        mag = np.abs(col)
        k = int(np.flatnonzero(mag >= mag.max() - 1e-9)[0])
        if col[k] < 0:
            vecs[:, j] = -col
    return vecs


def soft_mode_index(basis_or_freqs, mode_matrix=None, threshold: float = ZIGZAG_CORRELATION):
    """Index of the zigzag (soft) mode.

    Returns ``(index, correlation, fallback)`` where ``fallback`` is True when
    no mode reaches the correlation threshold and the lowest mode is used.
    """
    if mode_matrix is None:
        freqs, mode_matrix = basis_or_freqs.frequencies, basis_or_freqs.mode_matrix
    else:
        freqs = np.asarray(basis_or_freqs)
    n = mode_matrix.shape[0] // 2
    pattern = np.array([(-1.0) ** i for i in range(n)]) / np.sqrt(n)
    corr = np.abs(pattern @ mode_matrix[n:, :]) / np.linalg.norm(mode_matrix, axis=0)
    order = np.argsort(freqs, kind="stable")
    for j in order:
        if corr[j] > threshold:
            return int(j), float(corr[j]), False
    j = int(order[0])
    return j, float(corr[j]), True


def normal_modes(structure: CrystalStructure, scenario: TrapScenario, *, allow_near_critical: bool = False) -> ModeBasis:
    """Eigen-decomposition of the dimensionless Hessian at a minimum."""
    _, _, hess = total_potential(structure.positions, scenario, structure.internal_state)
    w, v = np.linalg.eigh(hess)
    if w[0] <= 0:
        raise SaddleError(f"Hessian eigenvalue {w[0]:.3e} is not positive")
    freqs = np.sqrt(w)
    vecs = _fix_signs(v)
    if freqs[0] < MIN_FREQUENCY:
        msg = f"lowest mode {freqs[0]:.4f} w_x below validity bound {MIN_FREQUENCY}"
        if not allow_near_critical:
            raise NearCriticalError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    idx, corr, fallback = soft_mode_index(freqs, vecs)
    if fallback:
        log.warning("soft mode below zigzag-correlation threshold (%.3f); using lowest mode", corr)
    return ModeBasis(structure.internal_state, freqs, vecs, idx, fallback, corr)
