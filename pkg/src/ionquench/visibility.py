"""Closed-form Ramsey overlap for thermal (and zero-temperature) initial states.

The overlap is a Gaussian integral twice over: first over the coherent
amplitudes ``alpha`` of the excited structure, which produces the
``Omega, s, G`` kernel, then over the Glauber-Sudarshan amplitudes
``lambda`` of the thermal ground state.  After the first integration the
exponent is a quadratic polynomial in ``z = (lambda, lambda^*)``; we carry
that polynomial exactly (constant, linear row, symmetric matrix) and split
its linear part by origin into the three contributions ``I`` (from the two
``G`` terms), ``J`` (from the displacement phases) and ``K`` (from
``s^T Omega^-1 s``).
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels
from .errors import BranchTrackingError, KernelConditioningError
from .params import HBAR, KB
from .structure_map import BogoliubovMap

log = logging.getLogger(__name__)

EPS_COLD = 1e-8
COND_LIMIT = 1e13


# ---------------------------------------------------------------------------
# thermal occupations
# ---------------------------------------------------------------------------


def thermal_occupation(omega, temperature):
    """Bose-Einstein mean phonon number for angular frequency ``omega`` (rad/s) at ``temperature`` (K)."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("frequencies must be positive")
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if temperature == 0:
        out = np.zeros_like(omega)
    else:
        x = HBAR * omega / (KB * temperature)
        out = 1.0 / np.expm1(x)
    return float(out) if out.ndim == 0 else out


class OccupationSource(str, Enum):
    GLOBAL_TEMPERATURE = "global-temperature"
    PER_MODE_OVERRIDE = "per-mode-override"


@dataclass(frozen=True)
class ThermalSpec:
    mode_occupations: np.ndarray
    source: OccupationSource = OccupationSource.PER_MODE_OVERRIDE
    temperature: float | None = None  # K, global source only
    mode_temperatures: tuple | None = None  # K per mode, when built from temperatures

    def __post_init__(self):
        occ = np.atleast_1d(np.asarray(self.mode_occupations, dtype=float))
        if np.any(occ < 0) or not np.all(np.isfinite(occ)):
            raise ValueError("mode occupations must be finite and non-negative")
        object.__setattr__(self, "mode_occupations", occ)
        object.__setattr__(self, "source", OccupationSource(self.source))

    @classmethod
    def from_temperature(cls, omega_si, temperature: float) -> "ThermalSpec":
        return cls(thermal_occupation(np.atleast_1d(omega_si), temperature), OccupationSource.GLOBAL_TEMPERATURE,
                   temperature)

    @classmethod
    def from_mode_temperatures(cls, omega_si, temperatures) -> "ThermalSpec":
        omega_si = np.atleast_1d(omega_si)
        temps = np.broadcast_to(np.asarray(temperatures, dtype=float), omega_si.shape)
        occ = np.array([thermal_occupation(w, T) for w, T in zip(omega_si, temps)])
        return cls(occ, OccupationSource.PER_MODE_OVERRIDE, None, tuple(float(T) for T in temps))

    @classmethod
    def zero(cls, n_modes: int) -> "ThermalSpec":
        return cls(np.zeros(n_modes), OccupationSource.GLOBAL_TEMPERATURE, 0.0)

    @property
    def hot_mask(self) -> np.ndarray:
        return self.mode_occupations >= EPS_COLD


# ---------------------------------------------------------------------------
# affine / quadratic bookkeeping in z = (lambda, lambda^*)
# ---------------------------------------------------------------------------


def _cj(F):
    """Coefficients of the complex conjugate of ``F z`` (swap halves, conjugate)."""
    n = F.shape[-1] // 2
    return np.concatenate([np.conj(F[..., n:]), np.conj(F[..., :n])], axis=-1)


def _sym(Q):
    return 0.5 * (Q + Q.T)


@dataclass
class Quadratic:
    """``c + l.z + z^T Q z`` with complex coefficients."""

    c: complex
    l: np.ndarray
    Q: np.ndarray

    def __add__(self, other: "Quadratic") -> "Quadratic":
        return Quadratic(self.c + other.c, self.l + other.l, self.Q + other.Q)

    def __call__(self, z):
        return self.c + self.l @ z + z @ self.Q @ z


def _bilinear(c1, F1, M, c2, F2) -> Quadratic:
    """``(c1 + F1 z)^T M (c2 + F2 z)`` as a quadratic polynomial."""
    return Quadratic(c1 @ M @ c2, c1 @ M @ F2 + c2 @ M.T @ F1, _sym(F1.T @ M @ F2))


def _im_affine(c, xi) -> Quadratic:
    """``i Im(c + xi.z)``, which is affine in ``z``."""
    n2 = xi.size
    return Quadratic(1j * np.imag(c), 0.5 * (xi - _cj(xi)), np.zeros((n2, n2), complex))


@dataclass
class KernelParts:
    """All intermediate objects of the closed form at one time ``t``."""

    t: float
    Omega: np.ndarray
    s0: np.ndarray
    s_lin: np.ndarray
    G_zeta: complex
    G_zeta_p_conj: complex
    phi_tilde: float
    C: complex
    I: np.ndarray
    J: np.ndarray
    K: np.ndarray
    Q: np.ndarray
    X: np.ndarray  # real/imaginary form, hot modes only, with the thermal block
    L: np.ndarray  # real/imaginary form, hot modes only
    integration_mask: np.ndarray
    A_plus: np.ndarray = field(repr=False, default=None)
    A_minus: np.ndarray = field(repr=False, default=None)

    @property
    def L_complex(self) -> np.ndarray:
        return self.I + self.J + self.K


def _g_of(A, gamma):
    """``G(gamma) = 1/2 gamma^*T A gamma^* - 1/2 |gamma|^2``."""
    gc = np.conj(gamma)
    return 0.5 * gc @ A @ gc - 0.5 * np.vdot(gamma, gamma).real


def omega_matrix(A, omega_e, t):
    """Kernel of the coherent-state integral in real/imaginary coordinates."""
    ph = np.exp(-1j * omega_e * t)
    A_t = A * np.outer(ph, ph)
    a_plus = 0.5 * (A_t + A)
    a_minus = 0.5 * (A_t - A)
    n = A.shape[0]
    eye = np.eye(n)
    Omega = np.block([[eye - a_plus, -1j * a_minus], [-1j * a_minus, eye + a_plus]])
    return Omega, a_plus, a_minus


def assemble_kernel(bmap: BogoliubovMap, kappa, kappa_p, thermal: ThermalSpec | np.ndarray | None, t: float) -> KernelParts:
    """Materialise every piece of the closed form at one time (reference path)."""
    n = bmap.n_modes
    u, v, A = bmap.u, bmap.v, bmap.A
    wg, we = bmap.omega_g, bmap.omega_e
    kappa = np.zeros(n, complex) if kappa is None else np.asarray(kappa, complex)
    kappa_p = np.zeros(n, complex) if kappa_p is None else np.asarray(kappa_p, complex)
    occ = _occupations(thermal, n)
    beta_g = bmap.beta_g.astype(complex)
    beta_e = bmap.beta_e.astype(complex)

    eg = np.exp(-1j * wg * t)
    ee = np.exp(-1j * we * t)
    zeta = kappa + beta_e
    zeta_p = kappa_p + beta_e

    # theta = zeta + F_th z, theta' = zeta' + F_thp z
    F_th = np.concatenate([u.T, v.T], axis=1).astype(complex)
    F_thp = np.concatenate([u.T * eg[None, :], v.T * np.conj(eg)[None, :]], axis=1)

    # S[theta] = A theta^* - theta ; S^*[theta'] = A theta' - theta'^*
    S_c, S_F = A @ np.conj(zeta) - zeta, A @ _cj(F_th) - F_th
    Sp_c, Sp_F = A @ zeta_p - np.conj(zeta_p), A @ F_thp - _cj(F_thp)
    plus_c, plus_F = S_c + ee * Sp_c, S_F + ee[:, None] * Sp_F
    minus_c, minus_F = S_c - ee * Sp_c, S_F - ee[:, None] * Sp_F
    s0 = np.concatenate([plus_c, -1j * minus_c])
    s_lin = np.concatenate([plus_F, -1j * minus_F], axis=0)

    Omega, a_plus, a_minus = omega_matrix(A, we, t)
    cond = np.linalg.cond(Omega)
    if cond > COND_LIMIT:
        raise KernelConditioningError(f"Omega condition number {cond:.2e}")
    W = np.linalg.inv(Omega)
    W = _sym(W)
    q_s = _bilinear(s0, s_lin, 0.25 * W, s0, s_lin)

    # G(theta) + G^*(theta')
    cF = _cj(F_th)
    g1 = _bilinear(np.conj(zeta), cF, 0.5 * A, np.conj(zeta), cF) + _bilinear(
        np.conj(zeta), cF, -0.5 * np.eye(n), zeta, F_th)
    cFp = _cj(F_thp)
    g2 = _bilinear(zeta_p, F_thp, 0.5 * A, zeta_p, F_thp) + _bilinear(
        zeta_p, F_thp, -0.5 * np.eye(n), np.conj(zeta_p), cFp)

    # phases: phi[lambda] - phi[lambda(t)] + Im(kappa.lambda_e^* + (kappa + lambda_e).beta_e) - (same at t, kappa')
    zero_n = np.zeros(n, complex)
    xi = np.concatenate([2.0 * beta_g * (1.0 - eg), zero_n])
    xi = xi + kappa @ cF + beta_e @ F_th - kappa_p @ cFp - beta_e @ F_thp
    phase = _im_affine(np.sum(kappa * beta_e) - np.sum(kappa_p * beta_e), xi)

    total = g1 + g2 + q_s + phase
    G_zeta, G_zeta_p_conj = g1.c, g2.c
    C = G_zeta + G_zeta_p_conj + q_s.c

    hot = occ >= EPS_COLD
    B = _real_imag_transform(n)
    Q_xy = B.T @ total.Q @ B
    L_xy = B.T @ total.l
    idx = np.concatenate([np.flatnonzero(hot), n + np.flatnonzero(hot)])
    thermal_blk = np.zeros(2 * n)
    thermal_blk[idx] = 1.0 / np.concatenate([occ[hot], occ[hot]])
    X = (np.diag(thermal_blk) - Q_xy)[np.ix_(idx, idx)]

    return KernelParts(
        t=float(t), Omega=Omega, s0=s0, s_lin=s_lin, G_zeta=G_zeta, G_zeta_p_conj=G_zeta_p_conj,
        phi_tilde=float(np.imag(phase.c)), C=C, I=g1.l + g2.l, J=phase.l, K=q_s.l, Q=total.Q,
        X=X, L=L_xy[idx], integration_mask=hot, A_plus=a_plus, A_minus=a_minus,
    )


def _real_imag_transform(n):
    """``z = B w`` with ``w = (x, y)`` and ``lambda = x + i y``."""
    eye = np.eye(n)
    return np.block([[eye, 1j * eye], [eye, -1j * eye]])


def _occupations(thermal, n):
    if thermal is None:
        return np.zeros(n)
    if isinstance(thermal, ThermalSpec):
        occ = thermal.mode_occupations
    else:
        occ = np.asarray(thermal, dtype=float)
    occ = np.broadcast_to(occ, (n,)).astype(float)
    if np.any(occ < 0):
        raise ValueError("occupations must be non-negative")
    return occ


def _principal_root_product(M):
    return np.prod(np.sqrt(np.linalg.eigvals(M)))


def overlap_from_parts(parts: KernelParts, bmap: BogoliubovMap, occ) -> tuple[complex, complex]:
    """Evaluate the overlap from a :class:`KernelParts`; returns ``(overlap, det_root)``.

    The ``1 / (n_1 ... n_k sqrt(det X))`` factor is evaluated as
    ``1 / sqrt(det(S X S))`` with ``S = diag(sqrt(n))``, the same number
    without the overflow of ``1/n`` for cold-ish modes.
    """
    occ = np.asarray(occ, dtype=float)
    hot = parts.integration_mask
    sq = np.sqrt(np.concatenate([occ[hot], occ[hot]]))
    M = sq[:, None] * parts.X * sq[None, :]
    b = sq * parts.L
    root = _principal_root_product(parts.Omega)
    if M.size:
        cond = np.linalg.cond(M)
        if cond > COND_LIMIT:
            raise KernelConditioningError(f"thermal kernel condition number {cond:.2e}")
        root = root * _principal_root_product(M)
        quad = 0.25 * b @ np.linalg.solve(M, b)
    else:
        quad = 0.0
    log_o = 2.0 * np.log(bmap.Z) + 1j * parts.phi_tilde + parts.C + quad - 1j * bmap.energy_offset * parts.t
    return np.exp(log_o) / root, root


def overlap_at(bmap: BogoliubovMap, kappa, kappa_p, thermal, t: float) -> complex:
    """Closed-form overlap at a single time (reference path)."""
    occ = _occupations(thermal, bmap.n_modes)
    parts = assemble_kernel(bmap, kappa, kappa_p, occ, t)
    return complex(overlap_from_parts(parts, bmap, occ)[0])


def overlap_zero_T(bmap: BogoliubovMap, kappa, kappa_p, t: float) -> complex:
    """Zero-temperature overlap ``Z^2 e^{i phi} e^C / sqrt(det Omega)``."""
    parts = assemble_kernel(bmap, kappa, kappa_p, np.zeros(bmap.n_modes), t)
    log_o = 2.0 * np.log(bmap.Z) + 1j * parts.phi_tilde + parts.C - 1j * bmap.energy_offset * t
    return complex(np.exp(log_o) / _principal_root_product(parts.Omega))


def ramsey_probability(overlap, phi: float = 0.0):
    """Ground-state population after the second pulse."""
    overlap = np.asarray(overlap)
    return 0.5 * (1.0 + np.real(np.exp(1j * phi) * overlap))


# ---------------------------------------------------------------------------
# time series, branch tracking and the full pipeline
# ---------------------------------------------------------------------------

MAX_BRANCH_STEP = 0.5 * np.pi
GRID_FACTOR = 0.05  # adjacent spacing must not exceed GRID_FACTOR / max(omega)


def _wrapped(d):
    return (d + np.pi) % (2.0 * np.pi) - np.pi


def branch_max_step(det_root) -> float:
    """Largest phase change of the determinant root between adjacent samples."""
    det_root = np.asarray(det_root)
    if det_root.size < 2:
        return 0.0
    return float(np.max(np.abs(_wrapped(np.diff(np.angle(det_root))))))


def check_branch_continuity(det_root, label: str = "determinant root") -> None:
    """Raise :class:`BranchTrackingError` when the root jumps by more than pi/2 between samples."""
    det_root = np.asarray(det_root)
    if det_root.size < 2:
        return
    step = np.abs(_wrapped(np.diff(np.angle(det_root))))
    k = int(np.argmax(step))
    if step[k] > MAX_BRANCH_STEP:
        raise BranchTrackingError(
            f"{label} changes phase by {step[k]:.3f} rad between samples {k} and {k + 1}; refine the time grid"
        )


def overlap_series(bmap: BogoliubovMap, kappa, kappa_p, thermal, ts, *, threads: int = 1,
                   track_branch: bool = True):
    """Closed-form overlap on a time grid; returns ``(overlap, det_root)``.

    The determinant roots are products of principal eigenvalue roots.  The
    real parts of both kernels are positive definite, so every eigenvalue
    stays in the right half-plane and this choice is continuous in ``t``; the
    continuity check guards against grids too coarse to resolve it.
    """
    n = bmap.n_modes
    ts = np.asarray(ts, dtype=float)
    kappa = np.zeros(n, complex) if kappa is None else np.asarray(kappa, complex)
    kappa_p = np.zeros(n, complex) if kappa_p is None else np.asarray(kappa_p, complex)
    occ = _occupations(thermal, n)
    sq = np.where(occ >= EPS_COLD, np.sqrt(occ), 0.0)
    args = (bmap.omega_g, bmap.omega_e, bmap.u, bmap.v, bmap.A, bmap.beta_g, bmap.beta_e, kappa, kappa_p, sq,
            2.0 * np.log(bmap.Z), bmap.energy_offset)
    if threads > 1 and ts.size > threads:
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(ts, threads)
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: _kernels.overlap_series(c, *args), chunks))
        out = np.concatenate([p[0] for p in parts])
        root = np.concatenate([p[1] for p in parts])
    else:
        out, root = _kernels.overlap_series(ts, *args)
    if not np.all(np.isfinite(out)):
        raise KernelConditioningError("non-finite overlap; kernel is numerically singular")
    if track_branch:
        check_branch_continuity(root)
    return out, root


@dataclass(frozen=True)
class TemperatureSpec:
    """Temperatures in kelvin; ``soft_mode_temperature`` overrides the zigzag mode only."""

    temperature: float = 0.0
    soft_mode_temperature: float | None = None

    def __post_init__(self):
        for t in (self.temperature, self.soft_mode_temperature):
            if t is not None and not (np.isfinite(t) and t >= 0):
                raise ValueError("temperatures must be finite and non-negative")

    def resolve(self, omega_si, soft_index: int) -> ThermalSpec:
        if self.soft_mode_temperature is None:
            return ThermalSpec.from_temperature(omega_si, self.temperature)
        temps = np.full(np.size(omega_si), float(self.temperature))
        temps[soft_index] = self.soft_mode_temperature
        return ThermalSpec.from_mode_temperatures(omega_si, temps)


@dataclass(frozen=True)
class QuenchSetup:
    """Everything the overlap needs that does not depend on time."""

    scenario: object
    struct_g: object
    struct_e: object
    basis_g: object
    basis_e: object
    bmap: BogoliubovMap
    kappa: np.ndarray
    kappa_p: np.ndarray

    @property
    def units(self):
        return self.scenario.units

    @property
    def omega_g_si(self) -> np.ndarray:
        return self.units.angular_to_si(self.basis_g.frequencies)


def prepare(scenario, recoil=None, *, allow_near_critical: bool = False) -> QuenchSetup:
    """Run crystal -> modes -> map -> recoil once for a scenario."""
    from .crystal import InternalState, find_equilibrium, normal_modes
    from .structure_map import RecoilSpec, build_map, recoil_displacement

    units = scenario.units
    sg = find_equilibrium(scenario, InternalState.G)
    se = find_equilibrium(scenario, InternalState.E, seed=sg)
    bg = normal_modes(sg, scenario, allow_near_critical=allow_near_critical)
    be = normal_modes(se, scenario, allow_near_critical=allow_near_critical)
    bmap = build_map(bg, be, sg, se, units.hbar)
    recoil = RecoilSpec() if recoil is None else recoil
    kw = dict(length_scale=units.length_scale, hbar=units.hbar, target_ion=scenario.central_ion)
    kappa = recoil_displacement(recoil, be, 1, **kw)
    kappa_p = recoil_displacement(recoil, be, 2, **kw)
    return QuenchSetup(scenario, sg, se, bg, be, bmap, kappa, kappa_p)


def resolve_thermal(thermal, setup: QuenchSetup) -> ThermalSpec:
    """Accept ``None``, a temperature in K, a :class:`TemperatureSpec` or a :class:`ThermalSpec`."""
    n = setup.bmap.n_modes
    if thermal is None:
        return ThermalSpec.zero(n)
    if isinstance(thermal, ThermalSpec):
        if thermal.mode_occupations.size != n:
            raise ValueError(f"expected {n} mode occupations, got {thermal.mode_occupations.size}")
        return thermal
    if isinstance(thermal, TemperatureSpec):
        return thermal.resolve(setup.omega_g_si, setup.basis_g.soft_mode_index)
    return ThermalSpec.from_temperature(setup.omega_g_si, float(thermal))


def check_grid(t_dimless, omega_max: float) -> None:
    t = np.asarray(t_dimless, dtype=float)
    if t.ndim != 1 or t.size == 0 or not np.all(np.isfinite(t)):
        raise ValueError("time grid must be a non-empty finite 1-D array")
    if t.size > 1:
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise ValueError("time grid must be strictly increasing")
        limit = GRID_FACTOR / omega_max
        if dt.max() > limit * (1.0 + 1e-9):
            raise ValueError(
                f"time grid too coarse: spacing {dt.max():.4g} exceeds {limit:.4g} (= {GRID_FACTOR}/max omega)"
            )


def fingerprint(payload) -> str:
    """sha256 of a canonical JSON rendering of ``payload``."""
    import json

    def default(o):
        if isinstance(o, np.ndarray):
            if np.iscomplexobj(o):
                return [[float(x.real), float(x.imag)] for x in o.ravel()]
            return o.tolist()
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, complex):
            return [o.real, o.imag]
        if isinstance(o, Enum):
            return o.value
        raise TypeError(f"cannot fingerprint {type(o).__name__}")

    text = json.dumps(payload, sort_keys=True, default=default, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True)
class VisibilityTrace:
    times_s: np.ndarray
    times: np.ndarray  # dimensionless, units of 1/w_x
    overlap: np.ndarray
    fingerprint: str
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (self.times_s.shape == self.times.shape == self.overlap.shape):
            raise ValueError("times and overlap must have equal lengths")

    @property
    def visibility(self) -> np.ndarray:
        return np.abs(self.overlap)

    def ramsey_probability(self, phi: float = 0.0) -> np.ndarray:
        return ramsey_probability(self.overlap, phi)


def _scenario_payload(scenario) -> dict:
    return {
        "n_ions": scenario.n_ions,
        "nu_x": scenario.nu_x,
        "nu_y": scenario.nu_y,
        "nu_dip": scenario.nu_dip,
        "dipole_geometry": scenario.dipole_geometry,
        "species": scenario.species.label,
        "mass": scenario.species.mass,
    }


def visibility_trace(scenario, thermal=None, recoil=None, t_grid=None, *, threads: int = 1,
                     allow_near_critical: bool = False, setup: QuenchSetup | None = None) -> VisibilityTrace:
    """Overlap and visibility on a time grid given in seconds.

    ``thermal`` is anything :func:`resolve_thermal` accepts.  A prepared
    ``setup`` may be passed to skip the structure calculation.
    """
    if t_grid is None:
        raise ValueError("t_grid is required")
    if setup is None:
        setup = prepare(scenario, recoil, allow_near_critical=allow_near_critical)
    units = setup.units
    t_s = np.asarray(t_grid, dtype=float)
    t = units.time_from_si(t_s)
    bmap = setup.bmap
    check_grid(t, float(max(bmap.omega_g.max(), bmap.omega_e.max())))
    th = resolve_thermal(thermal, setup)
    overlap, root = overlap_series(bmap, setup.kappa, setup.kappa_p, th, t, threads=threads)
    peak = float(np.max(np.abs(overlap)))
    if peak > 1.0 + 1e-9:
        log.warning("overlap modulus %.12f exceeds 1", peak)

    payload = {
        "scenario": _scenario_payload(setup.scenario),
        "occupations": th.mode_occupations,
        "kappa": setup.kappa,
        "kappa_p": setup.kappa_p,
        "t_seconds": t_s,
    }
    meta = {
        "structure_g": setup.struct_g.structure_label.value,
        "structure_e": setup.struct_e.structure_label.value,
        "omega_g": setup.basis_g.frequencies.tolist(),
        "omega_e": setup.basis_e.frequencies.tolist(),
        "soft_mode_g": setup.basis_g.soft_mode_index,
        "soft_mode_e": setup.basis_e.soft_mode_index,
        "soft_mode_fallback": bool(setup.basis_g.soft_mode_fallback or setup.basis_e.soft_mode_fallback),
        "mode_occupations": th.mode_occupations.tolist(),
        "occupation_source": th.source.value,
        "temperature": th.temperature,
        "mode_temperatures": th.mode_temperatures,
        "map": bmap.summary(),
        "hbar_dimensionless": units.hbar,
        "kernel": "numba" if _kernels.USE_NUMBA else "numpy",
        "branch_max_step": branch_max_step(root),
        "max_abs_overlap": peak,
    }
    return VisibilityTrace(t_s, t, overlap, fingerprint(payload), meta)
