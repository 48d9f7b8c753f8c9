import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzipuf.errors import InvalidArgumentError, UnsupportedSizeError
from mzipuf.photonic_core import (
    FockState,
    MeshTopology,
    PhaseSettings,
    PureState,
    embed_two_mode,
    evolve_fock,
    evolve_single_photon,
    fidelity,
    fock_patterns,
    haar_random_state,
    haar_states,
    haar_unitaries,
    is_unitary,
    measure_counts,
    mesh_apply_batch,
    mesh_unitary,
    mesh_unitary_batch,
    mzi_unitary,
    permanent,
)

from oracles import fock_creation_oracle, mesh_product, mzi_product, permanent_bruteforce

angles = st.floats(min_value=-20.0, max_value=20.0, allow_nan=False)

# values produced by the four-matrix oracle, frozen
MZI_PI3_PI4 = np.array([
    [-0.4829629131445341 + 0.12940952255126043j, -0.8365163037378078 + 0.22414386804201347j],
    [-0.4330127018922193 + 0.75j, 0.24999999999999994 - 0.4330127018922193j],
])
MESH3 = np.array([
    [-0.8292273547720653 + 0.14302241912125022j, 0.07118050474473962 - 0.03811258024610255j,
     0.4709723230576493 - 0.25217537471247764j],
    [-0.14849852479810513 - 0.14307937169682175j, 0.8674652225622149 - 0.09664044499797066j,
     -0.4241334286767169 - 0.12550708443049216j],
    [-0.4097895638947859 - 0.28543926950750714j, -0.4778705249961467 + 0.05731701620685324j,
     -0.682072881096833 - 0.23179310302780323j],
])


def test_mzi_frozen_value():
    assert np.allclose(mzi_unitary(np.pi / 3, np.pi / 4), MZI_PI3_PI4, atol=1e-14)


@given(angles, angles)
def test_mzi_matches_four_matrix_product(theta, phi):
    assert np.allclose(mzi_unitary(theta, phi), mzi_product(theta, phi), atol=1e-12)


@given(angles, angles)
def test_mzi_unitary_and_cross_port(theta, phi):
    u = mzi_unitary(theta, phi)
    assert np.max(np.abs(u.conj().T @ u - np.eye(2))) <= 1e-12
    assert abs(abs(u[1, 0]) ** 2 - math.cos(theta / 2) ** 2) <= 1e-12


def test_mzi_limits():
    assert np.allclose(np.abs(mzi_unitary(0.0, 0.0)) ** 2, [[0, 1], [1, 0]], atol=1e-15)  # cross
    assert np.allclose(np.abs(mzi_unitary(np.pi, 0.0)) ** 2, [[1, 0], [0, 1]], atol=1e-15)  # bar
    assert np.allclose(np.abs(mzi_unitary(np.pi / 2, 0.3)) ** 2, 0.5)


def test_mzi_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        mzi_unitary(float("nan"), 0.0)
    with pytest.raises(InvalidArgumentError):
        mzi_unitary(0.0, float("inf"))


def test_triangular_topology_counts():
    for n in range(2, 10):
        top = MeshTopology.triangular(n)
        assert top.n_mzis == n * (n - 1) // 2
        layers = [layer for layer, _ in top.mzi_placements]
        assert layers == sorted(layers)
    assert MeshTopology.triangular(4).mzi_placements[:2] == ((0, 0), (1, 1))


def test_topology_validation():
    with pytest.raises(InvalidArgumentError):
        MeshTopology(3, ((0, 2),))
    with pytest.raises(InvalidArgumentError):
        MeshTopology(3, ((-1, 0),))
    with pytest.raises(InvalidArgumentError):
        MeshTopology.triangular(1)
    top = MeshTopology(3, ((1, 0), (0, 1)))
    assert top.mzi_placements == ((0, 1), (1, 0))
    assert MeshTopology.from_dict(top.to_dict()) == top


def test_phase_settings_wrap():
    s = PhaseSettings.from_pairs([(2 * np.pi + 0.5, -0.25)])
    assert np.allclose(s.values, [[0.5, 2 * np.pi - 0.25]])
    assert s == PhaseSettings.from_pairs([(0.5, -0.25)])
    with pytest.raises(InvalidArgumentError):
        PhaseSettings(np.zeros(3))


def test_mesh_frozen_value():
    top = MeshTopology(3, ((0, 1), (1, 0), (2, 1)))
    s = PhaseSettings(np.array([[0.3, 1.1], [2.0, 0.4], [5.5, 3.3]]))
    assert np.allclose(mesh_unitary(top, s), MESH3, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_mesh_matches_embedded_product(n, seed):
    top = MeshTopology.triangular(n)
    s = PhaseSettings.random(top.n_mzis, np.random.default_rng(seed))
    expected = mesh_product(n, top.mzi_placements, s.values)
    got = mesh_unitary(top, s)
    assert np.allclose(got, expected, atol=1e-12)
    assert is_unitary(got)


def test_mesh_batch_matches_single():
    top = MeshTopology.triangular(5)
    rng = np.random.default_rng(3)
    th = rng.uniform(0, 7, (4, top.n_mzis))
    ph = rng.uniform(0, 7, (4, top.n_mzis))
    batch = mesh_unitary_batch(top, th, ph)
    for b in range(4):
        single = mesh_unitary(top, PhaseSettings(np.stack([th[b], ph[b]], axis=1)))
        assert np.allclose(batch[b], single, atol=1e-13)


def test_mesh_rejects_wrong_setting_count():
    with pytest.raises(InvalidArgumentError):
        mesh_unitary(MeshTopology.triangular(4), PhaseSettings.uniform(5, 0.1))


def test_all_bar_mesh_is_diagonal():
    top = MeshTopology.triangular(6)
    u = mesh_unitary(top, PhaseSettings.uniform(top.n_mzis, np.pi))
    assert np.allclose(np.abs(u), np.eye(6), atol=1e-12)


def test_embed_two_mode():
    u = embed_two_mode(mzi_unitary(1.0, 2.0), 2, 5)
    assert is_unitary(u)
    assert np.allclose(u[:2, :2], np.eye(2))
    with pytest.raises(InvalidArgumentError):
        embed_two_mode(np.eye(2), 4, 5)
    with pytest.raises(InvalidArgumentError):
        embed_two_mode(np.eye(3), 0, 5)


def test_single_photon_evolution_preserves_norm():
    top = MeshTopology.triangular(6)
    u = mesh_unitary(top, PhaseSettings.random(top.n_mzis, np.random.default_rng(1)))
    out = evolve_single_photon(u, haar_random_state(6, 2))
    assert abs(out.norm_squared - 1) < 1e-12
    with pytest.raises(InvalidArgumentError):
        evolve_single_photon(u, PureState.basis(5, 0))


def test_pure_state_basics():
    s = PureState([3, 4j])
    assert not s.normalized
    assert s.renormalized().normalized
    assert PureState.basis(3, 1).amplitudes[1] == 1
    with pytest.raises(InvalidArgumentError):
        PureState.basis(3, 3)
    with pytest.raises(InvalidArgumentError):
        PureState([0, 0]).renormalized()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_permanent_matches_bruteforce(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    assert abs(permanent(m) - permanent_bruteforce(m)) <= 1e-9 * max(1.0, abs(permanent_bruteforce(m)))


def test_permanent_known_values():
    assert permanent(np.ones((4, 4))) == pytest.approx(24)
    assert permanent(np.arange(1, 10).reshape(3, 3)) == pytest.approx(450)
    assert permanent(np.zeros((0, 0))) == 1
    with pytest.raises(UnsupportedSizeError):
        permanent(np.ones((13, 13)))
    with pytest.raises(InvalidArgumentError):
        permanent(np.ones((2, 3)))


def test_fock_patterns_count():
    for n, q in [(2, 2), (4, 3), (6, 2)]:
        assert len(fock_patterns(n, q)) == math.comb(n + q - 1, q)


def test_hong_ou_mandel():
    u = mzi_unitary(np.pi / 2, 0.0)
    out = evolve_fock(u, FockState.from_occupation((1, 1)))
    assert abs(out.amplitude((1, 1))) <= 1e-12
    assert out.probabilities()[(2, 0)] == pytest.approx(0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_fock_matches_creation_operator_oracle(n, q, seed):
    rng = np.random.default_rng(seed)
    top = MeshTopology.triangular(n)
    u = mesh_unitary(top, PhaseSettings.random(top.n_mzis, rng))
    pattern = tuple(rng.multinomial(q, np.ones(n) / n))
    got = evolve_fock(u, FockState.from_occupation(pattern))
    want = fock_creation_oracle(u, pattern)
    for t, amp in want.items():
        assert abs(got.amplitude(t) - amp) <= 1e-10
    assert got.norm_squared == pytest.approx(1.0, abs=1e-10)


def test_fock_single_photon_equals_single_photon_evolution():
    top = MeshTopology.triangular(5)
    u = mesh_unitary(top, PhaseSettings.random(top.n_mzis, np.random.default_rng(9)))
    occ = (0, 0, 1, 0, 0)
    out = evolve_fock(u, FockState.from_occupation(occ))
    single = evolve_single_photon(u, PureState.basis(5, 2)).amplitudes
    for k in range(5):
        t = tuple(int(i == k) for i in range(5))
        assert abs(out.amplitude(t) - single[k]) <= 1e-12


def test_fock_state_validation():
    with pytest.raises(InvalidArgumentError):
        FockState(2, {(1, 0): 1.0, (1, 1): 1.0})
    with pytest.raises(UnsupportedSizeError):
        evolve_fock(np.eye(3), FockState.from_occupation((5, 0, 0)))


def test_haar_state_moments():
    states = haar_states(4, 40000, np.random.default_rng(0))
    p = np.abs(states) ** 2
    assert np.allclose(np.linalg.norm(states, axis=1), 1)
    assert np.allclose(p.mean(axis=0), 0.25, atol=0.01)
    # E|psi_0|^4 = 2 / (d (d + 1)) for Haar vectors
    assert (p[:, 0] ** 2).mean() == pytest.approx(2 / 20, abs=0.005)
    with pytest.raises(InvalidArgumentError):
        haar_random_state(1, 0)


def test_haar_unitaries_are_unitary_and_uniform():
    us = haar_unitaries(3, 20000, np.random.default_rng(1))
    assert all(is_unitary(u) for u in us[:50])
    # |U_00|^2 is Beta(1, d-1) with mean 1/d
    assert (np.abs(us[:, 0, 0]) ** 2).mean() == pytest.approx(1 / 3, abs=0.01)


def test_measure_counts_chi_square():
    state = PureState(np.sqrt([0.1, 0.2, 0.3, 0.4]))
    shots = 100000
    counts = measure_counts(state, shots, 5)
    expected = shots * np.array([0.1, 0.2, 0.3, 0.4])
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < 16.27  # 99.9% quantile, 3 dof
    assert np.array_equal(counts, measure_counts(state, shots, 5))
    with pytest.raises(InvalidArgumentError):
        measure_counts(PureState([1, 1]), 10, 0)
    with pytest.raises(InvalidArgumentError):
        measure_counts(state, 0, 0)


def test_fidelity():
    a = PureState.basis(2, 0)
    b = PureState(np.array([1, 1]) / np.sqrt(2))
    assert fidelity(a, b) == pytest.approx(0.5)
    assert fidelity(a, a) == 1.0
    with pytest.raises(InvalidArgumentError):
        fidelity(a, PureState.basis(3, 0))


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2**32 - 1))
def test_mesh_apply_matches_matrix_product(n, seed):
    rng = np.random.default_rng(seed)
    top = MeshTopology.triangular(n)
    theta = rng.uniform(0, 2 * np.pi, size=(5, top.n_mzis))
    phi = rng.uniform(0, 2 * np.pi, size=(5, top.n_mzis))
    vecs = rng.normal(size=(5, n)) + 1j * rng.normal(size=(5, n))
    want = np.einsum("bij,bj->bi", mesh_unitary_batch(top, theta, phi), vecs)
    assert np.allclose(mesh_apply_batch(top, theta, phi, vecs), want, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        mesh_apply_batch(top, theta, phi, vecs[:4])
