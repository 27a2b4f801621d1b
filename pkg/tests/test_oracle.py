from __future__ import annotations

import numpy as np
import pytest
from conftest import bell_state

from sebd.circuit import BrickworkCircuit, Layer, ModelParams, build_circuit
from sebd.estimators import ObservableSpec, OnePointSuite
from sebd.lightcone import assign_cones
from sebd.mps import neel_state, product_state, random_mps
from sebd.operators import SIGMA_Z, embed, spin
from sebd.oracle import (
    CapacityError,
    DenseState,
    circuit_unitary,
    enumerate_branches,
    evolve_dense,
    expect_dense,
    ising_floquet_operator,
    unequal_time_dense,
)


def test_identity_circuit():
    state = DenseState.from_mps(random_mps(5, 3, 0))
    assert np.array_equal(evolve_dense(state, BrickworkCircuit(5, 1.0, ())).amplitudes, state.amplitudes)


def test_single_layer_two_sites(rng):
    u, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    state = DenseState(rng.normal(size=4) + 0j, 2)
    out = evolve_dense(state, BrickworkCircuit(2, 1.0, (Layer("odd", {0: u}),)))
    assert np.allclose(out.amplitudes, u @ state.amplitudes)


def test_kicked_ising_period_action():
    params = ModelParams("kicked_ising", 6, 1.0)
    state = DenseState.from_mps(random_mps(6, 4, 1))
    out = evolve_dense(state, build_circuit(params))
    assert np.max(np.abs(out.amplitudes - ising_floquet_operator(params) @ state.amplitudes)) < 1e-12


def test_expect_dense_simple():
    assert expect_dense(DenseState.product(["up", "down"]), {0: spin("z")}).real == pytest.approx(0.5)
    bell = DenseState.from_mps(bell_state())
    assert expect_dense(bell, {0: SIGMA_Z, 1: SIGMA_Z}).real == pytest.approx(1.0)


def test_unequal_time_matches_heisenberg_picture():
    params = ModelParams("kicked_ising", 5, 2.0)
    circuit = build_circuit(params)
    initial = DenseState.from_mps(random_mps(5, 3, 4))
    u = circuit_unitary(circuit)
    for site in range(5):
        o_t = u.conj().T @ embed(spin("z"), site, 5) @ u
        expected = np.vdot(initial.amplitudes, o_t @ embed(spin("x"), 1, 5) @ initial.amplitudes)
        got = unequal_time_dense(initial, circuit, site, spin("z"), 1, spin("x"))
        assert abs(got - expected) < 1e-12


def test_product_state_single_branch():
    schedule = assign_cones(BrickworkCircuit(4, 1.0, ()))
    out = enumerate_branches(neel_state(4), schedule, OnePointSuite([ObservableSpec("one_point", "z")]))
    assert out.n_branches == 1 and out.total_probability == pytest.approx(1.0)


def test_bell_cell_two_branches():
    schedule = assign_cones(BrickworkCircuit(2, 1.0, ()))
    out = enumerate_branches(bell_state(), schedule, OnePointSuite([ObservableSpec("one_point", "z")]))
    assert out.n_branches == 2
    assert out.total_probability == pytest.approx(1.0, abs=1e-12)
    assert out.values["sz"] == pytest.approx([0, 0], abs=1e-12)


def test_capacity_limits():
    with pytest.raises(CapacityError):
        DenseState.product(["up"] * 15)
    schedule = assign_cones(build_circuit(ModelParams("kicked_ising", 8, 1.0)))
    with pytest.raises(CapacityError):
        enumerate_branches(neel_state(8), schedule, OnePointSuite([ObservableSpec("one_point", "z")]))
    schedule = assign_cones(build_circuit(ModelParams("kicked_ising", 6, 2.0)))
    with pytest.raises(CapacityError):
        enumerate_branches(neel_state(6), schedule, OnePointSuite([ObservableSpec("one_point", "z")]), budget=10)


def test_enumeration_inert_truncation_knobs():
    schedule = assign_cones(build_circuit(ModelParams("kicked_ising", 4, 2.0)))
    suite = OnePointSuite([ObservableSpec("one_point", "x")])
    a = enumerate_branches(product_state(["up", "down", "down", "up"]), schedule, suite)
    b = enumerate_branches(product_state(["up", "down", "down", "up"]), schedule, suite, basis="z", budget=10_000)
    assert np.array_equal(a.values["sx"], b.values["sx"])
