"""Dense state-vector reference for small chains.

Site 0 is the most significant qubit of the state vector, matching
``MpsState.to_dense``. Branch enumeration drives the production SEBD engine with
a deterministic outcome chooser and sums every measurement record weighted by
its Born probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .circuit import BrickworkCircuit, GateId, ModelParams
from .engines import EngineConfig, run_sebd_trajectory
from .lightcone import LightConeSchedule
from .mps import MIN_PROBABILITY, MpsState
from .operators import SIGMA_X, SIGMA_Z, basis_vector, embed, heisenberg_bond

MAX_DENSE_SITES = 14
MAX_ENUMERATION_SITES = 6


class CapacityError(RuntimeError):
    """Problem too large for the dense oracle or the enumeration budget."""


@dataclass
class DenseState:
    amplitudes: np.ndarray
    n_sites: int

    def __post_init__(self) -> None:
        if self.n_sites > MAX_DENSE_SITES:
            raise CapacityError(f"dense states are capped at {MAX_DENSE_SITES} sites")
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if self.amplitudes.size != 2**self.n_sites:
            raise ValueError("amplitude vector has the wrong length")

    @classmethod
    def product(cls, config: Sequence) -> DenseState:
        vec = np.ones(1, dtype=np.complex128)
        for label in config:
            vec = np.kron(vec, basis_vector(label))
        return cls(vec, len(config))

    @classmethod
    def from_mps(cls, state: MpsState) -> DenseState:
        if state.n_sites > MAX_DENSE_SITES:
            raise CapacityError(f"dense states are capped at {MAX_DENSE_SITES} sites")
        return cls(state.to_dense(), state.n_sites)

    def copy(self) -> DenseState:
        return DenseState(self.amplitudes.copy(), self.n_sites)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def apply_gate_dense(vec: np.ndarray, n_sites: int, bond: int, gate: np.ndarray) -> np.ndarray:
    """Apply a 4x4 gate on sites ``bond, bond+1``; extra trailing axes are batch axes."""
    batch = vec.shape[1:]
    psi = vec.reshape((2**bond, 4, 2 ** (n_sites - bond - 2)) + batch)
    psi = np.einsum("ab,xby...->xay...", gate, psi)
    return psi.reshape((2**n_sites,) + batch)


def evolve_dense(
    state: DenseState, circuit: BrickworkCircuit, order: Sequence[GateId] | None = None
) -> DenseState:
    """Exact gate-by-gate evolution, in layer order unless ``order`` is given."""
    if state.n_sites != circuit.n_sites:
        raise ValueError("state and circuit sizes differ")
    if state.n_sites > MAX_DENSE_SITES:
        raise CapacityError(f"dense evolution is capped at {MAX_DENSE_SITES} sites")
    vec = state.amplitudes
    for gate_id in order if order is not None else circuit.gate_ids:
        vec = apply_gate_dense(vec, state.n_sites, gate_id[1], circuit.gate(gate_id))
    return DenseState(vec, state.n_sites)


def circuit_unitary(circuit: BrickworkCircuit) -> np.ndarray:
    n = circuit.n_sites
    if n > 10:
        raise CapacityError("dense circuit operators are limited to 10 sites")
    u = np.eye(2**n, dtype=np.complex128)
    for gate_id in circuit.gate_ids:
        u = apply_gate_dense(u, n, gate_id[1], circuit.gate(gate_id))
    return u


def placed_operator(ops: Mapping[int, np.ndarray], n_sites: int) -> np.ndarray:
    out = np.eye(2**n_sites, dtype=np.complex128)
    for site, op in ops.items():
        out = embed(np.asarray(op, dtype=np.complex128), site, n_sites) @ out
    return out


def expect_dense(state: DenseState, ops: Mapping[int, np.ndarray], ket: DenseState | None = None) -> complex:
    """<psi| prod_i O_i |psi> / <psi|psi>, or the raw cross form <psi| O |ket> when ``ket`` is given."""
    vec = state.amplitudes
    applied = (ket.amplitudes if ket is not None else vec).reshape((2,) * state.n_sites)
    for site, op in ops.items():
        applied = np.moveaxis(np.tensordot(np.asarray(op), applied, axes=([1], [site])), 0, site)
    val = np.vdot(vec, applied.reshape(-1))
    if ket is None:
        val = val / np.vdot(vec, vec).real
    return complex(val)


def reduced_density_matrix(state: DenseState, sites: Sequence[int]) -> np.ndarray:
    n = state.n_sites
    sites = list(sites)
    rest = [i for i in range(n) if i not in sites]
    psi = state.amplitudes.reshape((2,) * n).transpose(sites + rest).reshape(2 ** len(sites), -1)
    rho = psi @ psi.conj().T
    return rho / np.trace(rho).real


def ising_floquet_operator(params: ModelParams) -> np.ndarray:
    """exp(-i pi/4 sum X) exp(-i sum(J ZZ + h Z)) built from dense Pauli strings."""
    n = params.n_sites
    if n > 10:
        raise CapacityError("dense Floquet operators are limited to 10 sites")
    h_ising = sum(params.J * embed(SIGMA_Z, i, n) @ embed(SIGMA_Z, i + 1, n) for i in range(n - 1))
    h_ising = h_ising + sum(params.h * embed(SIGMA_Z, i, n) for i in range(n))
    kick = sum(embed(SIGMA_X, i, n) for i in range(n))
    return scipy.linalg.expm(-1j * (np.pi / 4) * kick) @ scipy.linalg.expm(-1j * h_ising)


def heisenberg_hamiltonian(n_sites: int) -> np.ndarray:
    h = np.zeros((2**n_sites, 2**n_sites), dtype=np.complex128)
    bond = heisenberg_bond()
    for i in range(n_sites - 1):
        h += np.kron(np.kron(np.eye(2**i), bond), np.eye(2 ** (n_sites - i - 2)))
    return h


def unequal_time_dense(
    initial: DenseState, circuit: BrickworkCircuit, site: int, op_t: np.ndarray, ref: int, op_0: np.ndarray
) -> complex:
    """<psi0| U^dag O_site U O_ref |psi0> through two dense evolutions."""
    psi_t = evolve_dense(initial, circuit)
    perturbed = DenseState(placed_operator({ref: op_0}, initial.n_sites) @ initial.amplitudes, initial.n_sites)
    perturbed_t = evolve_dense(perturbed, circuit)
    return expect_dense(psi_t, {site: op_t}, ket=perturbed_t)


# -- branch enumeration -------------------------------------------------------


@dataclass
class BranchSum:
    values: dict[str, np.ndarray]
    total_probability: float
    n_branches: int


TrajectoryFn = Callable[[Callable[[np.ndarray], int]], Mapping[str, np.ndarray]]


def enumerate_trajectories(trajectory: TrajectoryFn, budget: int = 4096) -> BranchSum:
    """Exact Born-weighted sum of a stochastic trajectory over every measurement record.

    ``trajectory(chooser)`` must run one deterministic trajectory in which every
    random outcome is obtained as ``chooser(probabilities)``. Branches are
    explored depth first; outcomes below ``MIN_PROBABILITY`` carry no weight.
    """
    pending: list[tuple[int, ...]] = [()]
    totals: dict[str, np.ndarray] = {}
    total_p = 0.0
    n_branches = 0
    while pending:
        prefix = pending.pop()
        n_branches += 1
        if n_branches > budget:
            raise CapacityError(f"more than {budget} measurement branches")
        path: list[int] = []
        weight = 1.0

        def chooser(probs: np.ndarray) -> int:
            nonlocal weight
            depth = len(path)
            if depth < len(prefix):
                k = prefix[depth]
            else:
                allowed = [i for i, p in enumerate(probs) if p >= MIN_PROBABILITY]
                k = allowed[0]
                pending.extend(tuple(path) + (alt,) for alt in reversed(allowed[1:]))
            path.append(k)
            weight *= float(probs[k])
            return k

        values = trajectory(chooser)
        total_p += weight
        for key, val in values.items():
            val = np.asarray(val)
            totals[key] = totals.get(key, 0) + weight * val
    return BranchSum(totals, total_p, n_branches)


def enumerate_branches(
    initial: MpsState,
    schedule: LightConeSchedule,
    suite,
    basis: str = "z",
    budget: int = 4096,
) -> BranchSum:
    """Exact expectation of every estimator of ``suite`` over all SEBD measurement records (eps = 0)."""
    if initial.n_sites > MAX_ENUMERATION_SITES:
        raise CapacityError(f"branch enumeration is capped at {MAX_ENUMERATION_SITES} sites")
    config = EngineConfig(projection_basis=basis, record_profiles=False)

    def trajectory(chooser):
        return run_sebd_trajectory(initial, schedule, config, suite, chooser=chooser).estimates

    return enumerate_trajectories(trajectory, budget)


def one_point_dense(state: DenseState, op: np.ndarray) -> np.ndarray:
    return np.array([expect_dense(state, {s: op}).real for s in range(state.n_sites)])

