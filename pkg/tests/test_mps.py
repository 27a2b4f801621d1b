from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from conftest import bell_state, global_phase_distance
from hypothesis import given
from hypothesis import strategies as st

from sebd.circuit import ModelParams, build_circuit, heisenberg_gate
from sebd.mps import (
    MpsState,
    ZeroProbabilityBranch,
    born_choice,
    cross_expect,
    neel_state,
    overlap,
    product_state,
    random_mps,
)
from sebd.operators import MEASUREMENT_BASES, SIGMA_X, SIGMA_Z, UP, embed, heisenberg_bond, spin
from sebd.oracle import DenseState, evolve_dense, expect_dense, reduced_density_matrix
from sebd.tensor import EXACT, TruncationPolicy


def evolved(n: int = 6, t: float = 2.0) -> MpsState:
    state = neel_state(n)
    for layer in build_circuit(ModelParams("kicked_ising", n, t)).layers:
        for bond, gate in layer.gates.items():
            state.apply_two_site_gate(bond, gate)
    return state


def test_neel_alternates():
    state = product_state(["up", "down", "up", "down"])
    assert product_state(["up", "down"]).ortho_center == 0
    assert [state.expect_local(i, SIGMA_Z) for i in range(4)] == pytest.approx([1, -1, 1, -1])
    assert list(state.bond_dims) == [1, 1, 1]


def test_all_up_has_zero_entropy_and_single_down():
    assert np.all(product_state(["up", "up"]).entanglement_profile().entropies == 0)
    assert product_state(["down"]).expect_local(0, spin("z")) == pytest.approx(-0.5)


def test_random_mps_properties():
    assert np.allclose(random_mps(5, 1, 3).entanglement_profile().entropies, 0, atol=1e-12)
    a, b = random_mps(6, 4, 9), random_mps(6, 4, 9)
    assert all(np.array_equal(x, y) for x, y in zip(a.tensors, b.tensors))
    s = random_mps(8, 20, 1)
    assert list(s.bond_dims) == [min(20, 2 ** min(b + 1, 7 - b)) for b in range(7)]
    assert abs(np.linalg.norm(s.to_dense()) - 1) < 1e-12


def test_identity_gate_leaves_state():
    state = random_mps(5, 3, 2)
    before = state.to_dense()
    dims = state.bond_dims.copy()
    state.apply_two_site_gate(2, np.eye(4))
    assert np.max(np.abs(state.to_dense() - before)) < 1e-12
    assert np.array_equal(state.bond_dims, dims)


def test_diagonal_gate_keeps_product():
    state = product_state(["up", "up"])
    state.apply_two_site_gate(0, np.diag(np.exp(1j * np.arange(4))))
    assert state.bond_dims[0] == 1


def test_heisenberg_gate_against_expm():
    state = product_state(["up", "down"])
    state.apply_two_site_gate(0, heisenberg_gate(0.1))
    expected = scipy.linalg.expm(-0.1j * heisenberg_bond()) @ np.array([0, 1, 0, 0])
    assert np.max(np.abs(state.to_dense() - expected)) < 1e-12
    assert state.bond_dims[0] == 2
    s = np.linalg.svd(expected.reshape(2, 2), compute_uv=False)
    p = s**2 / np.sum(s**2)
    assert state.entanglement_entropy(0) == pytest.approx(-np.sum(p * np.log(p)), abs=1e-12)


def test_non_unitary_gate_rejected():
    with pytest.raises(ValueError):
        neel_state(2).apply_two_site_gate(0, 2 * np.eye(4))


def test_bell_entropy_and_product_entropy():
    assert bell_state().entanglement_entropy(0) == pytest.approx(np.log(2), abs=1e-12)
    assert neel_state(4).entanglement_entropy(1) == pytest.approx(0.0)


def test_expect_local_simple_cases():
    up = product_state(["up"])
    assert up.expect_local(0, spin("z")) == pytest.approx(0.5)
    assert up.expect_local(0, spin("x")) == pytest.approx(0.0)
    with pytest.raises(ValueError):
        up.expect_local(0, np.array([[0, 1], [0, 0]]))


def test_expect_local_matches_dense_kicked_ising():
    params = ModelParams("kicked_ising", 8, 2.0)
    state = evolved(8, 2.0)
    dense = evolve_dense(DenseState.product(["up", "down"] * 4), build_circuit(params))
    assert abs(state.expect_local(3, SIGMA_X) - expect_dense(dense, {3: SIGMA_X}).real) < 1e-8


def test_expect_two_site():
    assert product_state(["up", "up"]).expect_two_site(0, SIGMA_Z, 1, SIGMA_Z) == pytest.approx(1.0)
    bell = bell_state()
    assert bell.expect_two_site(0, SIGMA_Z, 1, SIGMA_Z) == pytest.approx(1.0)
    assert bell.expect_two_site(0, SIGMA_Z, 1, np.eye(2)) == pytest.approx(0.0, abs=1e-14)
    state = random_mps(6, 4, 7)
    dense = DenseState.from_mps(state)
    sx = spin("x")
    assert abs(state.expect_two_site(1, sx, 4, sx) - expect_dense(dense, {1: sx, 4: sx}).real) < 1e-10


def test_cross_expect():
    a = random_mps(5, 3, 1)
    assert cross_expect(a, a, 2, np.eye(2)) == pytest.approx(1.0)
    assert cross_expect(product_state(["up", "up"]), product_state(["down", "down"]), 0, SIGMA_X) == 0
    b = random_mps(5, 3, 2)
    b.log_amplitude = 0.3 + 0.2j
    sz = spin("z")
    expected = np.vdot(a.to_dense(), embed(sz, 3, 5) @ b.to_dense())
    assert abs(cross_expect(a, b, 3, sz) - expected) < 1e-10
    with pytest.raises(ValueError):
        cross_expect(a, random_mps(4, 2, 1), 0, sz)


def test_one_body_rdm():
    assert np.allclose(product_state(["up"]).one_body_rdm(0).matrix, np.diag([1, 0]))
    assert np.allclose(bell_state().one_body_rdm(0).matrix, np.eye(2) / 2)
    state = evolved()
    rho = state.one_body_rdm(2)
    ref = reduced_density_matrix(DenseState.from_mps(state), [2])
    assert np.max(np.abs(rho.matrix - ref)) < 1e-10
    assert np.allclose(rho.matrix, rho.matrix.conj().T, atol=1e-12)
    assert abs(np.trace(rho.matrix) - 1) < 1e-12
    assert np.all(rho.eigenvalues >= -1e-12)
    assert rho.expect(spin("z")) == pytest.approx(state.expect_local(2, spin("z")), abs=1e-12)


def test_project_bell_pair():
    bell = bell_state()
    p = bell.project_site(0, UP)
    assert p == pytest.approx(0.5)
    assert bell.expect_local(1, spin("z")) == pytest.approx(0.5)
    assert bell.entanglement_entropy(0) < 1e-12


def test_project_own_configuration():
    state = neel_state(4)
    before = state.to_dense()
    assert state.project_site(2, UP) == pytest.approx(1.0)
    assert np.allclose(state.to_dense(), before)


def test_project_marginal_matches_dense():
    state = evolved()
    dense = DenseState.from_mps(state)
    p_dense = np.sum(np.abs(dense.amplitudes.reshape(2, -1)[0]) ** 2)
    assert abs(state.project_site(0, UP) - p_dense) < 1e-10


def test_project_zero_probability():
    with pytest.raises(ZeroProbabilityBranch):
        neel_state(2).project_site(1, UP)
    state = neel_state(2)
    state.project_site(1, UP, strict=False)
    assert state.is_zero


def test_projection_keeps_unnormalized_vector():
    state = evolved()
    dense = state.to_dense()
    state.project_site(2, MEASUREMENT_BASES["x"][1])
    projector = embed(np.outer(MEASUREMENT_BASES["x"][1], MEASUREMENT_BASES["x"][1].conj()), 2, 6)
    assert np.max(np.abs(state.to_dense() - projector @ dense)) < 1e-12


def test_sample_site_cases():
    rng = np.random.default_rng(0)
    assert product_state(["up"]).sample_site(0, MEASUREMENT_BASES["z"], rng) == (0, pytest.approx(1.0))
    assert product_state(["+"]).sample_site(0, MEASUREMENT_BASES["x"], rng) == (0, pytest.approx(1.0))
    ups = sum(bell_state().sample_site(0, MEASUREMENT_BASES["z"], rng)[0] == 0 for _ in range(10_000))
    assert abs(ups / 10_000 - 0.5) < 0.02


def test_rdm_sample_site():
    rng = np.random.default_rng(1)
    k, lam = product_state(["up"]).rdm_sample_site(0, rng)
    assert (k, lam) == (0, pytest.approx(1.0))
    hits = [bell_state().rdm_sample_site(0, rng)[1] for _ in range(200)]
    assert np.allclose(hits, 0.5)
    state = evolved()
    ref = np.linalg.eigvalsh(reduced_density_matrix(DenseState.from_mps(state), [3]))[::-1]
    rdm = state.one_body_rdm(3)
    assert np.max(np.abs(rdm.eigenvalues - ref)) < 1e-10
    probs = state.outcome_probabilities(3, rdm.eigenvectors)
    assert np.max(np.abs(probs - ref)) < 1e-10


def test_degenerate_rdm_order_is_fixed():
    vecs = bell_state().one_body_rdm(0).eigenvectors
    assert np.allclose(vecs, np.eye(2)[::-1]) or np.allclose(vecs, np.eye(2))
    assert np.array_equal(vecs, bell_state().one_body_rdm(0).eigenvectors)


def test_born_choice_intervals():
    probs = np.array([0.25, 0.75])
    assert born_choice(probs, 0.25) == 0
    assert born_choice(probs, 0.2500001) == 1
    assert born_choice(probs, 1.0) == 1
    assert born_choice(np.array([0.0, 1.0]), 0.0) == 1


def test_reversed_and_from_dense():
    state = random_mps(5, 4, 11)
    dense = state.to_dense().reshape((2,) * 5).transpose(4, 3, 2, 1, 0).reshape(-1)
    assert np.allclose(state.reversed().to_dense(), dense)
    back = MpsState.from_dense(state.to_dense())
    assert global_phase_distance(back.to_dense(), state.to_dense()) < 1e-12


# -- properties ---------------------------------------------------------------

seeds = st.integers(0, 2**31 - 1)


@given(st.integers(2, 7), st.integers(1, 6), seeds, st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_norm_preserved_and_dense_agreement(n, chi, seed, bonds):
    state = random_mps(n, chi, seed)
    dense = DenseState.from_mps(state)
    rng = np.random.default_rng(seed)
    for b in bonds:
        b %= n - 1
        z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        u, _ = np.linalg.qr(z)
        state.apply_two_site_gate(b, u)
        dense = evolve_dense(dense, _single_gate(n, b, u))
    assert abs(np.linalg.norm(state.to_dense()) - 1) < 1e-10
    assert np.max(np.abs(state.to_dense() - dense.amplitudes)) < 1e-10


def _single_gate(n, bond, gate):
    from sebd.circuit import BrickworkCircuit, Layer

    return BrickworkCircuit(n, 1.0, (Layer("odd", {bond: gate}),))


@given(st.integers(2, 7), st.integers(1, 6), seeds, st.data())
def test_canonicalization_idempotent(n, chi, seed, data):
    state = random_mps(n, chi, seed)
    center = data.draw(st.integers(0, n - 1))
    state.canonicalize(center)
    before = [t.copy() for t in state.tensors]
    state.canonicalize(center)
    assert max(np.max(np.abs(a - b)) for a, b in zip(before, state.tensors)) < 1e-12


@given(st.integers(2, 7), st.integers(1, 8), seeds)
def test_entropy_bound(n, chi, seed):
    profile = random_mps(n, chi, seed).entanglement_profile()
    assert np.all(profile.entropies >= 0)
    assert np.all(profile.entropies <= np.log(profile.bond_dims) + 1e-12)


@given(st.integers(1, 6), st.integers(1, 5), seeds, st.data())
def test_born_completeness(n, chi, seed, data):
    state = random_mps(n, chi, seed)
    site = data.draw(st.integers(0, n - 1))
    z = np.random.default_rng(seed).normal(size=(2, 2)) + 1j * np.random.default_rng(seed + 1).normal(size=(2, 2))
    basis, _ = np.linalg.qr(z)
    assert abs(np.sum(state.outcome_probabilities(site, basis.T)) - 1) < 1e-12


@given(st.integers(2, 7), st.integers(1, 6), seeds, st.data())
def test_measurement_disentangles_prefix(n, chi, seed, data):
    state = random_mps(n, chi, seed)
    m = data.draw(st.integers(1, n))
    rng = np.random.default_rng(seed)
    for site in range(m):
        state.sample_site(site, MEASUREMENT_BASES["x"], rng)
    profile = state.entanglement_profile()
    assert np.all(profile.entropies[: min(m, n - 1)] < 1e-10)
