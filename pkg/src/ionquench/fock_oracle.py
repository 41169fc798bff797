"""Brute-force evaluation of the Ramsey overlap in a truncated Fock space.

The oracle works in the ground-structure Fock basis.  Excited-structure
ladder operators are built from the ground ones through the inverse
Bogoliubov relation, so it shares nothing with the closed form apart from
the coefficients ``u, v, beta_e``.  Quadratic operators are assembled in a
space padded by one level per mode and projected back, which keeps them
exact on the retained subspace.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .errors import TruncationError
from .structure_map import BogoliubovMap

MAX_MODES = 3
MAX_DIM = 250_000
DENSE_LIMIT = 4000
TAIL_TOL = 1e-10


def _ladder(levels: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, levels)), 1, format="csr", dtype=complex)


@dataclass
class TruncatedSystem:
    bmap: BogoliubovMap
    n_max: tuple
    e0_g: float = 0.0
    e0_e: float = 0.0
    ops: list = field(init=False, repr=False)
    _padded: list = field(init=False, repr=False)
    _keep: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n_modes = self.bmap.n_modes
        if n_modes > MAX_MODES:
            raise TruncationError(f"oracle supports at most {MAX_MODES} modes (got {n_modes})")
        if np.isscalar(self.n_max):
            self.n_max = (int(self.n_max),) * n_modes
        self.n_max = tuple(int(n) for n in self.n_max)
        if len(self.n_max) != n_modes:
            raise ValueError("n_max must have one entry per mode")
        if self.dim > MAX_DIM:
            raise TruncationError(f"dimension {self.dim} exceeds cap {MAX_DIM}")
        padded_levels = [n + 2 for n in self.n_max]
        self._padded = _kron_ladders(padded_levels)
        occ = np.array(list(itertools.product(*[range(n) for n in padded_levels])))
        self._keep = np.flatnonzero(np.all(occ <= np.array(self.n_max), axis=1))
        self.ops = [self._project(a) for a in self._padded]

    @classmethod
    def from_map(cls, bmap: BogoliubovMap, n_max) -> "TruncatedSystem":
        """Choose constants so the Hamiltonians differ by ``bmap.energy_offset`` plus zero-point terms only."""
        e0_e = bmap.energy_offset + 0.5 * float(np.sum(bmap.omega_g) - np.sum(bmap.omega_e))
        return cls(bmap, n_max, 0.0, e0_e)

    @property
    def dim(self) -> int:
        return int(np.prod([n + 1 for n in self.n_max]))

    @property
    def occupations(self) -> np.ndarray:
        return np.array(list(itertools.product(*[range(n + 1) for n in self.n_max])))

    def _project(self, op):
        op = sp.csr_matrix(op)
        return op[self._keep][:, self._keep]

    def excited_ladders(self, padded: bool = False):
        """``b_j = sum_k u_kj a_k + v_kj a_k^dag + beta_e_j`` for every mode."""
        a = self._padded if padded else self.ops
        dim = a[0].shape[0]
        eye = sp.identity(dim, dtype=complex, format="csr")
        u, v, be = self.bmap.u, self.bmap.v, self.bmap.beta_e
        out = []
        for j in range(self.bmap.n_modes):
            b = be[j] * eye
            for k in range(self.bmap.n_modes):
                b = b + u[k, j] * a[k] + v[k, j] * a[k].conj().T
            out.append(sp.csr_matrix(b))
        return out


def _kron_ladders(levels):
    mats = []
    for j in range(len(levels)):
        factors = [sp.identity(n, dtype=complex, format="csr") for n in levels]
        factors[j] = _ladder(levels[j])
        m = factors[0]
        for f in factors[1:]:
            m = sp.kron(m, f, format="csr")
        mats.append(m)
    return mats


def build_hamiltonians(system: TruncatedSystem):
    """Sparse ``H_g`` (diagonal) and ``H_e`` on the truncated space."""
    bmap = system.bmap
    n_g = sum(bmap.omega_g[j] * (system.ops[j].conj().T @ system.ops[j]) for j in range(bmap.n_modes))
    dim = system.dim
    eye = sp.identity(dim, dtype=complex, format="csr")
    h_g = n_g + (system.e0_g + 0.5 * float(np.sum(bmap.omega_g))) * eye
    b = system.excited_ladders(padded=True)
    n_e = sum(bmap.omega_e[j] * (b[j].conj().T @ b[j]) for j in range(bmap.n_modes))
    h_e = system._project(n_e) + (system.e0_e + 0.5 * float(np.sum(bmap.omega_e))) * eye
    return sp.csr_matrix(h_g), sp.csr_matrix(h_e)


def displacement_generator(system: TruncatedSystem, kappa) -> sp.csr_matrix:
    """Anti-Hermitian ``sum_j kappa_j b_j^dag - kappa_j^* b_j`` in the excited basis."""
    kappa = np.asarray(kappa, dtype=complex)
    b = system.excited_ladders(padded=True)
    gen = sum(kappa[j] * b[j].conj().T - np.conj(kappa[j]) * b[j] for j in range(system.bmap.n_modes))
    return system._project(gen)


def _nbar(occupations, n_modes):
    occ = getattr(occupations, "mode_occupations", occupations)  # ThermalSpec or plain array
    occ = np.zeros(n_modes) if occ is None else np.asarray(occ, dtype=float)
    return np.broadcast_to(occ, (n_modes,))


def thermal_weights(system: TruncatedSystem, occupations) -> np.ndarray:
    """Boltzmann weights of the retained Fock states (``occupations``: mean numbers or a ThermalSpec)."""
    nbar = _nbar(occupations, system.bmap.n_modes)
    q = nbar / (1.0 + nbar)
    tail = float(np.sum(q ** (np.array(system.n_max) + 1)))
    if tail > TAIL_TOL:
        raise TruncationError(f"Boltzmann tail beyond n_max is {tail:.2e} (> {TAIL_TOL:g})")
    occ = system.occupations
    w = np.prod((1.0 - q) * q ** occ, axis=1)
    return w / w.sum()


def oracle_overlap(system: TruncatedSystem, occupations, kappa=None, kappa_p=None, t=0.0):
    """``Tr{R'^dag U_e R rho_0 U_g^dag}`` for one or many times.

    ``occupations`` are the mean phonon numbers of the ground modes (or a
    :class:`~ionquench.visibility.ThermalSpec`).
    Returns a complex scalar for scalar ``t`` and an array otherwise.
    """
    n = system.bmap.n_modes
    kappa = np.zeros(n, complex) if kappa is None else np.asarray(kappa, complex)
    kappa_p = np.zeros(n, complex) if kappa_p is None else np.asarray(kappa_p, complex)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    p = thermal_weights(system, occupations)
    cols = _relevant_columns(p)
    h_g, h_e = build_hamiltonians(system)
    e_g = h_g.diagonal().real
    basis = np.zeros((system.dim, cols.size), dtype=complex)
    basis[cols, np.arange(cols.size)] = 1.0
    psi = _apply_displacement(system, kappa, basis)
    bra = _apply_displacement(system, kappa_p, basis)

    if system.dim <= DENSE_LIMIT:
        h = h_e.toarray()
        # u, v and beta_e are real, so H_e is a real symmetric matrix
        w, V = np.linalg.eigh(h.real if not np.any(h.imag) else h)
        left = bra.conj().T @ V  # (cols, eig)
        right = V.conj().T @ psi  # (eig, cols)
        phases = np.exp(-1j * np.outer(ts, w))
        vals = phases @ (left.T * right)
    else:
        vals = np.empty((ts.size, cols.size), dtype=complex)
        h_csc = h_e.tocsc()
        for i, tt in enumerate(ts):
            evolved = expm_multiply((-1j * tt) * h_csc, psi)
            vals[i] = np.einsum("ij,ij->j", bra.conj(), evolved)
    out = (vals * np.exp(1j * np.outer(ts, e_g[cols]))) @ p[cols]
    return out[0] if np.ndim(t) == 0 else out


def _relevant_columns(p, dropped_weight=1e-13):
    """Initial Fock states whose discarded total Boltzmann weight stays below ``dropped_weight``."""
    order = np.argsort(p)
    cum = np.cumsum(p[order])
    n_drop = int(np.searchsorted(cum, dropped_weight, side="right"))
    return np.sort(order[n_drop:])


def _apply_displacement(system, kappa, vecs):
    if not np.any(kappa):
        return vecs
    return expm_multiply(displacement_generator(system, kappa).tocsc(), vecs)


def convergence_sweep(bmap, occupations, t_list, n_max_list=(10, 16, 24), kappa=None, kappa_p=None,
                      tol: float = 1e-7) -> dict:
    """Oracle values at increasing truncations and their successive differences.

    ``bmap`` may also be a :class:`TruncatedSystem`, whose map is reused.
    """
    if isinstance(bmap, TruncatedSystem):
        bmap = bmap.bmap
    n_max_list = sorted(n_max_list)
    values = []
    for n_max in n_max_list:
        system = TruncatedSystem.from_map(bmap, n_max)
        values.append(np.atleast_1d(oracle_overlap(system, occupations, kappa, kappa_p, np.asarray(t_list))))
    diffs = [float(np.max(np.abs(b - a))) for a, b in zip(values, values[1:])]
    return {
        "n_max": list(n_max_list),
        "t": [float(x) for x in np.atleast_1d(t_list)],
        "values": values,
        "differences": diffs,
        "converged": bool(diffs and diffs[-1] < tol),
        "best": values[-1],
    }
