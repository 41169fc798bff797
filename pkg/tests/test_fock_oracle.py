import numpy as np
import pytest
import scipy.linalg as sla

from ionquench.errors import TruncationError
from ionquench.fock_oracle import (TruncatedSystem, build_hamiltonians, convergence_sweep, displacement_generator,
                                   oracle_overlap, thermal_weights)
from ionquench.structure_map import map_from_link
from ionquench.visibility import ThermalSpec


@pytest.fixture(scope="module")
def two_mode():
    c, s = np.cos(0.3), np.sin(0.3)
    return map_from_link([[c, -s], [s, c]], [1.0, 1.4], [1.2, 1.1], [0.1, -0.2])


def test_commutator_on_retained_subspace(two_mode):
    sys = TruncatedSystem.from_map(two_mode, 8)
    occ = sys.occupations
    interior = np.all(occ < 8, axis=1)
    for a in sys.ops:
        a = a.toarray()
        comm = a @ a.conj().T - a.conj().T @ a
        np.testing.assert_allclose(comm[np.ix_(interior, interior)], np.eye(interior.sum()), atol=1e-12)
    b = [x.toarray() for x in sys.excited_ladders()]
    inner = np.all(occ < 6, axis=1)
    for j in range(2):
        comm = b[j] @ b[j].conj().T - b[j].conj().T @ b[j]
        np.testing.assert_allclose(comm[np.ix_(inner, inner)], np.eye(inner.sum()), atol=1e-10)


def test_hamiltonians_hermitian(two_mode):
    h_g, h_e = build_hamiltonians(TruncatedSystem.from_map(two_mode, 6))
    assert abs(h_g - h_g.conj().T).max() == 0
    assert abs(h_e - h_e.conj().T).max() < 1e-12


def test_displacement_unitary(two_mode):
    sys = TruncatedSystem.from_map(two_mode, 20)
    gen = displacement_generator(sys, [0.05j, -0.03]).toarray()
    np.testing.assert_allclose(gen, -gen.conj().T, atol=1e-14)
    D = sla.expm(gen)
    np.testing.assert_allclose(D.conj().T @ D, np.eye(sys.dim), atol=1e-12)


def test_thermal_weights_trace_and_tail(two_mode):
    sys = TruncatedSystem.from_map(two_mode, 30)
    p = thermal_weights(sys, [0.3, 0.1])
    assert p.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(p >= 0)
    mean = p @ sys.occupations
    np.testing.assert_allclose(mean, [0.3, 0.1], atol=1e-8)
    np.testing.assert_allclose(thermal_weights(sys, ThermalSpec(np.array([0.3, 0.1]))), p)
    with pytest.raises(TruncationError):
        thermal_weights(TruncatedSystem.from_map(two_mode, 4), [2.0, 0.0])


def test_mode_and_dimension_caps():
    with pytest.raises(TruncationError):
        TruncatedSystem.from_map(map_from_link(np.eye(4), np.ones(4), np.ones(4), np.zeros(4)), 2)
    with pytest.raises(TruncationError):
        TruncatedSystem.from_map(map_from_link(np.eye(3), np.ones(3), np.ones(3), np.zeros(3)), 80)


def test_identity_map_overlap_is_offset_phase():
    m = map_from_link([[1.0]], [1.0], [1.0], [0.0], energy_offset=0.4)
    sys = TruncatedSystem.from_map(m, 20)
    ts = np.array([0.0, 1.0, 2.5])
    np.testing.assert_allclose(oracle_overlap(sys, [0.2], t=ts), np.exp(-0.4j * ts), atol=1e-13)


def test_pure_displacement_matches_coherent_state_formula():
    beta, w, n = 0.6, 1.3, 0.2
    m = map_from_link([[1.0]], [w], [w], [beta])
    ts = np.array([0.4, 2.0, 3.7])
    vals = oracle_overlap(TruncatedSystem.from_map(m, 60), [0.0], t=ts)
    np.testing.assert_allclose(vals, np.exp(beta**2 * (np.exp(-1j * w * ts) - 1)), atol=1e-12)
    hot = oracle_overlap(TruncatedSystem.from_map(m, 80), [n], t=ts)
    np.testing.assert_allclose(np.abs(hot), np.exp(-beta**2 * (1 - np.cos(w * ts)) * (2 * n + 1)), atol=1e-10)


def test_sparse_path_agrees_with_dense(two_mode, monkeypatch):
    import ionquench.fock_oracle as fo

    sys = TruncatedSystem.from_map(two_mode, 12)
    ts = np.array([0.3, 1.7])
    dense = oracle_overlap(sys, [0.2, 0.1], [0.05j, 0.0], [0.05j, 0.02j], ts)
    monkeypatch.setattr(fo, "DENSE_LIMIT", 10)
    sparse = oracle_overlap(sys, [0.2, 0.1], [0.05j, 0.0], [0.05j, 0.02j], ts)
    np.testing.assert_allclose(sparse, dense, atol=1e-11)


def test_convergence_sweep_reports_differences(two_mode):
    out = convergence_sweep(two_mode, [0.1, 0.1], [0.5, 1.0], (10, 14, 18))
    assert out["n_max"] == [10, 14, 18]
    assert len(out["differences"]) == 2
    assert out["differences"][-1] <= out["differences"][0]
    assert out["converged"]
