import numpy as np
import pytest
import scipy.linalg as sla

from conftest import cached_setup
from ionquench.errors import MapError
from ionquench.fock_oracle import TruncatedSystem
from ionquench.structure_map import (RecoilGeometry, RecoilSpec, bogoliubov_coefficients, displacement_phase,
                                     evolve_lambda, map_from_link, recoil_displacement)


def test_identity_when_states_do_not_differ():
    s = cached_setup(0.02, 0.0)
    m = s.bmap
    np.testing.assert_allclose(m.T, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(m.v, 0.0, atol=1e-12)
    np.testing.assert_allclose(m.beta_g, 0.0, atol=1e-12)
    assert m.Z == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("g", [0.02, -0.005, -0.1])
def test_symplectic_identities(g):
    m = cached_setup(g).bmap
    n = m.n_modes
    np.testing.assert_allclose(m.u @ m.u.T - m.v @ m.v.T, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(m.u @ m.v.T, (m.u @ m.v.T).T, atol=1e-12)
    np.testing.assert_allclose(m.A, m.A.T, atol=1e-14)
    assert np.max(np.abs(np.linalg.eigvalsh(m.A))) < 1
    np.testing.assert_allclose(m.beta_e, -(m.u + m.v).T @ m.beta_g, atol=1e-12)


def test_single_mode_squeeze_coefficients():
    u, v = bogoliubov_coefficients(np.eye(1), [1.0], [4.0])
    # r = sqrt(4 / 1) = 2
    assert u[0, 0] == pytest.approx(1.25) and v[0, 0] == pytest.approx(0.75)


def test_map_rejects_bad_link():
    with pytest.raises(MapError):
        map_from_link(np.zeros((2, 2)), [1.0, 1.0], [1.0, 1.0], [0.0, 0.0])


def test_crossing_point_displacement_is_large():
    m = cached_setup(-0.005).bmap
    assert np.max(np.abs(m.beta_g)) > 1.0  # zigzag -> string moves ions by many zero-point lengths


def test_displacement_operator_relation_in_fock_space():
    """D_g(lambda) = exp(i phi) D_e(lambda_e), checked on low-lying states of a truncated space."""
    m = map_from_link([[1.0]], [1.0], [1.5], [0.2])
    sys = TruncatedSystem.from_map(m, 70)
    a = sys.ops[0].toarray()
    b = sys.excited_ladders()[0].toarray()
    lam = np.array([0.15 + 0.1j])
    phi, lam_e = displacement_phase(lam, m)
    d_g = sla.expm(lam[0] * a.conj().T - np.conj(lam[0]) * a)
    d_e = sla.expm(lam_e[0] * b.conj().T - np.conj(lam_e[0]) * b)
    np.testing.assert_allclose((np.exp(1j * phi) * d_e)[:10, :10], d_g[:10, :10], atol=1e-9)


def test_evolve_lambda_at_zero_is_linear_map():
    m = cached_setup(-0.1).bmap
    lam = np.linspace(0.1, 0.6, 6) * (1 + 0.5j)
    np.testing.assert_allclose(evolve_lambda(lam, m, 0.0), displacement_phase(lam, m)[1])


def test_recoil_presets():
    s = cached_setup(0.02)
    units = s.units
    kw = dict(length_scale=units.length_scale, hbar=units.hbar, target_ion=1)
    zero = RecoilSpec.preset("copropagating", 313e-9)
    assert zero.is_zero
    np.testing.assert_array_equal(recoil_displacement(zero, s.basis_e, 1, **kw), 0)
    counter = RecoilSpec.preset(RecoilGeometry.COUNTERPROPAGATING, 313e-9)
    ortho = RecoilSpec.preset(RecoilGeometry.ORTHOGONAL, 313e-9)
    kc = recoil_displacement(counter, s.basis_e, 1, **kw)
    ko = recoil_displacement(ortho, s.basis_e, "second", **kw)
    assert np.all(kc.real == 0) and np.any(kc.imag != 0)
    np.testing.assert_allclose(np.abs(ko), np.abs(kc) / np.sqrt(2), rtol=1e-12)
    # transverse kick on the central ion: axial modes untouched
    M = s.basis_e.mode_matrix
    axial = np.abs(M[:3, :]).sum(axis=0) > 0.5
    np.testing.assert_allclose(kc[axial], 0, atol=1e-14)
    with pytest.raises(ValueError):
        recoil_displacement(counter, s.basis_e, 3, **kw)
    with pytest.raises(ValueError):
        RecoilSpec.preset("explicit", 313e-9)
