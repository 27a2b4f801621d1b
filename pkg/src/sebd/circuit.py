"""First-order brickwork Trotter circuits for the kicked Ising and Heisenberg chains.

Layer 0 is the first layer applied. "Odd" layers act on bonds 0, 2, 4, ...
(sites (1,2), (3,4), ... in 1-based labels), "even" layers on bonds 1, 3, ...
Each Trotter step is one odd layer followed by one even layer.

Kicked Ising: one step is one Floquet period,

    U_F = exp(-i pi/4 sum_j X_j) exp(-i sum_j (J Z_j Z_j+1 + h Z_j)).

The Ising part is diagonal, so it splits freely over the two layers. The
longitudinal field on a site is shared equally by the gates touching it in the
period (the full field goes to a chain-end site touched by one gate). The kick
on a site is folded into the *last* gate that touches it in the period, on the
output side, so it acts after all diagonal terms of that site.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operators import IDENTITY, SIGMA_X, SIGMA_Z, heisenberg_bond
from .tensor import is_unitary

MODELS = ("kicked_ising", "heisenberg")

GateId = tuple[int, int]  # (layer, bond)


@dataclass(frozen=True)
class ModelParams:
    model: str
    n_sites: int
    t_final: float
    dt: float = 1.0
    J: float = math.pi / 8
    h: float = 0.2

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.model == "kicked_ising" and self.dt != 1.0:
            raise ValueError("kicked Ising uses one Floquet period per step (dt = 1)")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(f"t_final={self.t_final} is not a multiple of dt={self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def at_time(self, t_final: float) -> ModelParams:
        return ModelParams(self.model, self.n_sites, t_final, self.dt, self.J, self.h)


@dataclass(frozen=True)
class Layer:
    parity: str  # "odd" | "even"
    gates: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class BrickworkCircuit:
    n_sites: int
    dt: float
    layers: tuple[Layer, ...]

    @property
    def steps(self) -> int:
        return len(self.layers) // 2

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def gate_ids(self) -> list[GateId]:
        return [(i, b) for i, layer in enumerate(self.layers) for b in sorted(layer.gates)]

    @property
    def gate_count(self) -> int:
        return sum(len(layer.gates) for layer in self.layers)

    def gate(self, gate_id: GateId) -> np.ndarray:
        layer, bond = gate_id
        return self.layers[layer].gates[bond]

    def truncated(self, n_layers: int) -> BrickworkCircuit:
        return BrickworkCircuit(self.n_sites, self.dt, self.layers[:n_layers])

    def mirrored(self) -> BrickworkCircuit:
        """Same circuit with site i relabelled N-1-i (gates get their legs swapped)."""
        swap = np.eye(4)[[0, 2, 1, 3]]
        n = self.n_sites
        layers = []
        for layer in self.layers:
            gates = {n - 2 - b: swap @ g @ swap for b, g in layer.gates.items()}
            parity = layer.parity if n % 2 == 0 else ("even" if layer.parity == "odd" else "odd")
            layers.append(Layer(parity, gates))
        return BrickworkCircuit(n, self.dt, tuple(layers))


def layer_bonds(n_sites: int, parity: str) -> list[int]:
    start = 0 if parity == "odd" else 1
    return list(range(start, n_sites - 1, 2))


def heisenberg_gate(dt: float) -> np.ndarray:
    return scipy.linalg.expm(-1j * dt * heisenberg_bond())


def build_heisenberg(params: ModelParams) -> BrickworkCircuit:
    """Trotter circuit U = (U_even U_odd)^steps with gates exp(-i dt h_bond)."""
    if params.model != "heisenberg":
        raise ValueError("params describe a different model")
    gate = heisenberg_gate(params.dt)
    layers = []
    for _ in range(params.steps):
        for parity in ("odd", "even"):
            layers.append(Layer(parity, {b: gate for b in layer_bonds(params.n_sites, parity)}))
    return BrickworkCircuit(params.n_sites, params.dt, tuple(layers))


def _touch_counts(n_sites: int) -> np.ndarray:
    counts = np.zeros(n_sites, dtype=int)
    for parity in ("odd", "even"):
        for b in layer_bonds(n_sites, parity):
            counts[b] += 1
            counts[b + 1] += 1
    return counts


def _last_touch(n_sites: int) -> dict[int, str]:
    """Parity of the last layer in a period that touches each site."""
    last = {}
    for parity in ("odd", "even"):
        for b in layer_bonds(n_sites, parity):
            last[b] = last[b + 1] = parity
    return last


def kicked_ising_gate(J: float, h_left: float, h_right: float, kick_left: bool, kick_right: bool) -> np.ndarray:
    zz = np.kron(SIGMA_Z, SIGMA_Z)
    field_term = h_left * np.kron(SIGMA_Z, IDENTITY) + h_right * np.kron(IDENTITY, SIGMA_Z)
    diag = np.exp(-1j * np.diag(J * zz + field_term).real)
    kick = scipy.linalg.expm(-1j * (np.pi / 4) * SIGMA_X)
    out = np.kron(kick if kick_left else IDENTITY, kick if kick_right else IDENTITY)
    return out @ np.diag(diag)


def build_kicked_ising(params: ModelParams) -> BrickworkCircuit:
    """Floquet circuit of the kicked Ising chain, one odd and one even layer per period."""
    if params.model != "kicked_ising":
        raise ValueError("params describe a different model")
    n = params.n_sites
    counts = _touch_counts(n)
    last = _last_touch(n)
    period = []
    for parity in ("odd", "even"):
        gates = {}
        for b in layer_bonds(n, parity):
            gates[b] = kicked_ising_gate(
                params.J,
                params.h / counts[b],
                params.h / counts[b + 1],
                kick_left=last[b] == parity,
                kick_right=last[b + 1] == parity,
            )
        period.append(Layer(parity, gates))
    return BrickworkCircuit(n, params.dt, tuple(period) * params.steps)


def build_circuit(params: ModelParams) -> BrickworkCircuit:
    if params.model == "kicked_ising":
        return build_kicked_ising(params)
    return build_heisenberg(params)


def check_circuit(circuit: BrickworkCircuit, tol: float = 1e-12) -> None:
    """Raise if layers do not alternate odd/even or a gate is not unitary."""
    for i, layer in enumerate(circuit.layers):
        expected = "odd" if i % 2 == 0 else "even"
        if layer.parity != expected:
            raise ValueError(f"layer {i} has parity {layer.parity}, expected {expected}")
        if sorted(layer.gates) != layer_bonds(circuit.n_sites, expected):
            raise ValueError(f"layer {i} acts on bonds {sorted(layer.gates)}")
        for b, g in layer.gates.items():
            if not is_unitary(g, tol):
                raise ValueError(f"gate ({i}, {b}) is not unitary")
