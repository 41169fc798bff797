"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``IONQUENCH_NUMBA=0`` in the environment (before import) to force the
numpy implementations.  Both paths are always importable so that the test
suite and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and os.environ.get("IONQUENCH_NUMBA", "1").lower() not in ("0", "false", "no")


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# Coulomb interaction: energy, gradient and Hessian in the (x..., y...) layout
# ---------------------------------------------------------------------------


def coulomb_terms_numpy(pos):
    n = pos.shape[0] // 2
    xy = np.stack([pos[:n], pos[n:]], axis=1)
    d = xy[:, None, :] - xy[None, :, :]
    r2 = np.einsum("ija,ija->ij", d, d)
    iu = np.triu_indices(n, 1)
    if np.any(r2[iu] < 1e-18):
        raise ZeroDivisionError("coincident ions")
    np.fill_diagonal(r2, 1.0)
    r = np.sqrt(r2)
    inv_r = 1.0 / r
    np.fill_diagonal(inv_r, 0.0)
    inv_r3 = inv_r**3
    inv_r5 = inv_r**5
    energy = 0.5 * inv_r.sum()
    force = -(d * inv_r3[:, :, None]).sum(axis=1)  # gradient per ion, shape (n, 2)
    grad = np.concatenate([force[:, 0], force[:, 1]])
    # off-diagonal blocks: -(3 d_a d_b / r^5 - delta_ab / r^3)
    blk = -(3.0 * d[:, :, :, None] * d[:, :, None, :] * inv_r5[:, :, None, None]
            - np.eye(2)[None, None] * inv_r3[:, :, None, None])
    diag = -blk.sum(axis=1)
    idx = np.arange(n)
    blk[idx, idx] = diag
    hess = blk.transpose(2, 0, 3, 1).reshape(2 * n, 2 * n)
    return energy, grad, hess


def _coulomb_terms_loop(pos):
    n = pos.shape[0] // 2
    energy = 0.0
    grad = np.zeros(2 * n)
    hess = np.zeros((2 * n, 2 * n))
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i] - pos[j]
            dy = pos[n + i] - pos[n + j]
            r2 = dx * dx + dy * dy
            if r2 < 1e-18:
                raise ZeroDivisionError("coincident ions")
            r = np.sqrt(r2)
            ir3 = 1.0 / (r2 * r)
            ir5 = ir3 / r2
            energy += 1.0 / r
            grad[i] -= dx * ir3
            grad[j] += dx * ir3
            grad[n + i] -= dy * ir3
            grad[n + j] += dy * ir3
            hxx = 3.0 * dx * dx * ir5 - ir3
            hyy = 3.0 * dy * dy * ir5 - ir3
            hxy = 3.0 * dx * dy * ir5
            # (i,i) and (j,j) gain +h, (i,j) and (j,i) gain -h
            for a, b, h in ((0, 0, hxx), (1, 1, hyy), (0, 1, hxy), (1, 0, hxy)):
                ia = a * n + i
                ib = b * n + i
                ja = a * n + j
                jb = b * n + j
                hess[ia, ib] += h
                hess[ja, jb] += h
                hess[ia, jb] -= h
                hess[ja, ib] -= h
    return energy, grad, hess


coulomb_terms_numba = _njit(_coulomb_terms_loop)


def coulomb_terms(pos):
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if USE_NUMBA:
        return coulomb_terms_numba(pos)
    return coulomb_terms_numpy(pos)


# ---------------------------------------------------------------------------
# Closed-form overlap on a time grid
#
# Arguments shared by both paths:
#   ts            time samples (dimensionless)
#   wg, we        ground / excited mode frequencies
#   u, v, A       real Bogoliubov coefficients and squeezing matrix
#   beta_g/e      real phase-space displacements
#   kappa/_p      complex recoil displacements of the two pulses
#   sq            sqrt of mean occupations (0 for modes pinned as cold)
#   log_z2        2 log Z
#   offset        constant energy difference of the Hamiltonians
# Both return (overlap, det_root) where det_root = sqrt(det Omega det M)
# as a product of principal eigenvalue roots.
# ---------------------------------------------------------------------------


def _overlap_series_loop(ts, wg, we, u, v, A, beta_g, beta_e, kappa, kappa_p, sq, log_z2, offset):
    n = wg.shape[0]
    n2 = 2 * n
    out = np.empty(ts.shape[0], dtype=np.complex128)
    roots = np.empty(ts.shape[0], dtype=np.complex128)
    Ac = A.astype(np.complex128)
    uT = u.T.astype(np.complex128)
    vT = v.T.astype(np.complex128)
    bg = beta_g.astype(np.complex128)
    be = beta_e.astype(np.complex128)
    zeta = kappa + be
    zeta_p = kappa_p + be
    eye_n = np.eye(n, dtype=np.complex128)

    F_th = np.zeros((n, n2), dtype=np.complex128)
    F_th[:, :n] = uT
    F_th[:, n:] = vT
    cF = np.zeros((n, n2), dtype=np.complex128)
    cF[:, :n] = vT
    cF[:, n:] = uT
    S_F = Ac @ cF - F_th
    S_c = Ac @ np.conj(zeta) - zeta
    # t-independent part of the G(theta) polynomial
    Qg1 = 0.5 * (cF.T @ Ac @ cF) - 0.5 * (cF.T @ F_th)
    lg1 = np.conj(zeta) @ Ac @ cF - 0.5 * (np.conj(zeta) @ F_th + zeta @ cF)
    c_g1 = 0.5 * (np.conj(zeta) @ Ac @ np.conj(zeta)) - 0.5 * np.sum(np.abs(zeta) ** 2)
    c_g2 = 0.5 * (zeta_p @ Ac @ zeta_p) - 0.5 * np.sum(np.abs(zeta_p) ** 2)
    phi_tilde = np.imag(np.sum(kappa * be) - np.sum(kappa_p * be))

    B = np.zeros((n2, n2), dtype=np.complex128)
    for j in range(n):
        B[j, j] = 1.0
        B[j, n + j] = 1j
        B[n + j, j] = 1.0
        B[n + j, n + j] = -1j
    s_xy = np.concatenate((sq, sq)).astype(np.complex128)

    for it in range(ts.shape[0]):
        t = ts[it]
        eg = np.exp(-1j * wg * t)
        ee = np.exp(-1j * we * t)
        F_thp = np.zeros((n, n2), dtype=np.complex128)
        cFp = np.zeros((n, n2), dtype=np.complex128)
        for j in range(n):
            F_thp[:, j] = uT[:, j] * eg[j]
            F_thp[:, n + j] = vT[:, j] * np.conj(eg[j])
            cFp[:, j] = vT[:, j] * eg[j]
            cFp[:, n + j] = uT[:, j] * np.conj(eg[j])
        Sp_F = Ac @ F_thp - cFp
        Sp_c = Ac @ zeta_p - np.conj(zeta_p)
        s_lin = np.zeros((n2, n2), dtype=np.complex128)
        s0 = np.zeros(n2, dtype=np.complex128)
        for j in range(n):
            s_lin[j, :] = S_F[j, :] + ee[j] * Sp_F[j, :]
            s_lin[n + j, :] = -1j * (S_F[j, :] - ee[j] * Sp_F[j, :])
            s0[j] = S_c[j] + ee[j] * Sp_c[j]
            s0[n + j] = -1j * (S_c[j] - ee[j] * Sp_c[j])

        At = Ac * np.outer(ee, ee)
        ap = 0.5 * (At + Ac)
        am = 0.5 * (At - Ac)
        Om = np.zeros((n2, n2), dtype=np.complex128)
        Om[:n, :n] = eye_n - ap
        Om[:n, n:] = -1j * am
        Om[n:, :n] = -1j * am
        Om[n:, n:] = eye_n + ap
        W = np.linalg.inv(Om)
        W = 0.5 * (W + W.T)

        Q = 0.25 * (s_lin.T @ W @ s_lin) + Qg1
        Q = Q + 0.5 * (F_thp.T @ Ac @ F_thp) - 0.5 * (F_thp.T @ cFp)
        Q = 0.5 * (Q + Q.T)
        l = 0.5 * (s0 @ W @ s_lin) + lg1
        l = l + zeta_p @ Ac @ F_thp - 0.5 * (zeta_p @ cFp + np.conj(zeta_p) @ F_thp)
        xi = np.zeros(n2, dtype=np.complex128)
        xi[:n] = 2.0 * bg * (1.0 - eg)
        xi = xi + kappa @ cF + be @ F_th - kappa_p @ cFp - be @ F_thp
        cxi = np.zeros(n2, dtype=np.complex128)
        cxi[:n] = np.conj(xi[n:])
        cxi[n:] = np.conj(xi[:n])
        l = l + 0.5 * (xi - cxi)
        C = c_g1 + c_g2 + 0.25 * (s0 @ W @ s0)

        Qxy = B.T @ Q @ B
        Lxy = B.T @ l
        M = np.eye(n2, dtype=np.complex128) - np.outer(s_xy, s_xy) * Qxy
        b = s_xy * Lxy
        quad = 0.25 * (b @ np.linalg.solve(M, b))
        root = np.prod(np.sqrt(np.linalg.eigvals(Om))) * np.prod(np.sqrt(np.linalg.eigvals(M)))
        roots[it] = root
        out[it] = np.exp(log_z2 + 1j * phi_tilde + C + quad - 1j * offset * t) / root
    return out, roots


overlap_series_numba = _njit(_overlap_series_loop)


def overlap_series_numpy(ts, wg, we, u, v, A, beta_g, beta_e, kappa, kappa_p, sq, log_z2, offset):
    n = wg.shape[0]
    uT = u.T.astype(complex)
    vT = v.T.astype(complex)
    Ac = A.astype(complex)
    be = beta_e.astype(complex)
    zeta = kappa + be
    zeta_p = kappa_p + be
    F_th = np.concatenate([uT, vT], axis=1)
    cF = np.concatenate([vT, uT], axis=1)
    S_F = Ac @ cF - F_th
    S_c = Ac @ np.conj(zeta) - zeta
    Qg1 = 0.5 * (cF.T @ Ac @ cF) - 0.5 * (cF.T @ F_th)
    lg1 = np.conj(zeta) @ Ac @ cF - 0.5 * (np.conj(zeta) @ F_th + zeta @ cF)
    c_g = (0.5 * (np.conj(zeta) @ Ac @ np.conj(zeta)) - 0.5 * np.sum(np.abs(zeta) ** 2)
           + 0.5 * (zeta_p @ Ac @ zeta_p) - 0.5 * np.sum(np.abs(zeta_p) ** 2))
    phi_tilde = np.imag(np.sum(kappa * be) - np.sum(kappa_p * be))

    eg = np.exp(-1j * np.outer(ts, wg))  # (t, n)
    ee = np.exp(-1j * np.outer(ts, we))
    F_thp = np.concatenate([uT[None] * eg[:, None, :], vT[None] * np.conj(eg)[:, None, :]], axis=2)
    cFp = np.concatenate([vT[None] * eg[:, None, :], uT[None] * np.conj(eg)[:, None, :]], axis=2)
    Sp_F = Ac @ F_thp - cFp
    Sp_c = Ac @ zeta_p - np.conj(zeta_p)
    s_lin = np.concatenate([S_F[None] + ee[:, :, None] * Sp_F, -1j * (S_F[None] - ee[:, :, None] * Sp_F)], axis=1)
    s0 = np.concatenate([S_c[None] + ee * Sp_c[None], -1j * (S_c[None] - ee * Sp_c[None])], axis=1)

    At = Ac[None] * ee[:, :, None] * ee[:, None, :]
    ap = 0.5 * (At + Ac)
    am = 0.5 * (At - Ac)
    eye = np.broadcast_to(np.eye(n), ap.shape)
    Om = np.concatenate(
        [np.concatenate([eye - ap, -1j * am], axis=2), np.concatenate([-1j * am, eye + ap], axis=2)], axis=1)
    W = np.linalg.inv(Om)
    W = 0.5 * (W + W.transpose(0, 2, 1))

    sT = s_lin.transpose(0, 2, 1)
    FpT = F_thp.transpose(0, 2, 1)
    Q = 0.25 * sT @ W @ s_lin + Qg1 + 0.5 * FpT @ Ac @ F_thp - 0.5 * FpT @ cFp
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    l = (0.5 * np.einsum("ti,tij,tjk->tk", s0, W, s_lin) + lg1
         + np.einsum("i,ij,tjk->tk", zeta_p, Ac, F_thp)
         - 0.5 * (np.einsum("i,tik->tk", zeta_p, cFp) + np.einsum("i,tik->tk", np.conj(zeta_p), F_thp)))
    xi = np.concatenate([2.0 * beta_g[None] * (1.0 - eg), np.zeros_like(eg)], axis=1)
    xi = xi + (kappa @ cF + be @ F_th)[None] - np.einsum("i,tik->tk", kappa_p, cFp) - np.einsum("i,tik->tk", be, F_thp)
    cxi = np.concatenate([np.conj(xi[:, n:]), np.conj(xi[:, :n])], axis=1)
    l = l + 0.5 * (xi - cxi)
    C = c_g + 0.25 * np.einsum("ti,tij,tj->t", s0, W, s0)

    eyen = np.eye(n)
    B = np.block([[eyen, 1j * eyen], [eyen, -1j * eyen]])
    Qxy = B.T @ Q @ B
    Lxy = l @ B
    s_xy = np.concatenate([sq, sq])
    M = np.eye(2 * n) - np.outer(s_xy, s_xy)[None] * Qxy
    b = s_xy[None] * Lxy
    quad = 0.25 * np.einsum("ti,ti->t", b, np.linalg.solve(M, b[..., None])[..., 0])
    root = np.prod(np.sqrt(np.linalg.eigvals(Om)), axis=1) * np.prod(np.sqrt(np.linalg.eigvals(M)), axis=1)
    out = np.exp(log_z2 + 1j * phi_tilde + C + quad - 1j * offset * ts) / root
    return out, root


def overlap_series(ts, wg, we, u, v, A, beta_g, beta_e, kappa, kappa_p, sq, log_z2, offset):
    args = (
        np.ascontiguousarray(ts, dtype=np.float64),
        np.ascontiguousarray(wg, dtype=np.float64),
        np.ascontiguousarray(we, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        np.ascontiguousarray(A, dtype=np.float64),
        np.ascontiguousarray(beta_g, dtype=np.float64),
        np.ascontiguousarray(beta_e, dtype=np.float64),
        np.ascontiguousarray(kappa, dtype=np.complex128),
        np.ascontiguousarray(kappa_p, dtype=np.complex128),
        np.ascontiguousarray(sq, dtype=np.float64),
        float(log_z2),
        float(offset),
    )
    if USE_NUMBA:
        return overlap_series_numba(*args)
    return overlap_series_numpy(*args)
