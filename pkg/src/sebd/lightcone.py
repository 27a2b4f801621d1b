"""Light-cone partition of a brickwork circuit.

Cone k collects every gate in the causal past of the final legs of unit cell k
(sites 2k and 2k+1, 0-based) that no earlier cone already owns. Executing cones
in order therefore brings sites 0..2k+1 to the final time after cone k, and
every gate runs after all gates it depends on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .circuit import BrickworkCircuit, GateId


@dataclass(frozen=True)
class Cone:
    cell: tuple[int, ...]
    gates: tuple[GateId, ...]


@dataclass(frozen=True)
class LightConeSchedule:
    circuit: BrickworkCircuit
    cones: tuple[Cone, ...]

    @property
    def cell_count(self) -> int:
        return len(self.cones)

    @property
    def n_sites(self) -> int:
        return self.circuit.n_sites

    def cell_of(self, site: int) -> int:
        for k, cone in enumerate(self.cones):
            if site in cone.cell:
                return k
        raise IndexError(f"site {site} is in no cell")

    def to_json(self) -> str:
        """Debug dump: one array of ``[layer, bond]`` pairs per cone."""
        return json.dumps([[list(g) for g in cone.gates] for cone in self.cones])


def unit_cells(n_sites: int) -> list[tuple[int, ...]]:
    """Two-site cells from the left; an odd chain ends with a one-site cell."""
    return [tuple(range(i, min(i + 2, n_sites))) for i in range(0, n_sites, 2)]


def causal_past(circuit: BrickworkCircuit, sites) -> set[GateId]:
    """All gates with a path in the circuit DAG to the final legs of ``sites``."""
    active = set(sites)
    past: set[GateId] = set()
    for layer_index in range(circuit.depth - 1, -1, -1):
        hit = [b for b in circuit.layers[layer_index].gates if b in active or b + 1 in active]
        for b in hit:
            past.add((layer_index, b))
            active.update((b, b + 1))
    return past


def assign_cones(circuit: BrickworkCircuit) -> LightConeSchedule:
    """Split all gates into cones, one per unit cell, ordered by layer then bond."""
    cones = []
    owned: set[GateId] = set()
    active: set[int] = set()
    for cell in unit_cells(circuit.n_sites):
        active.update(cell)
        past = causal_past(circuit, active)
        new = sorted(past - owned)
        owned |= past
        cones.append(Cone(cell, tuple(new)))
    return LightConeSchedule(circuit, tuple(cones))


def cone_sites(schedule: LightConeSchedule, k: int) -> set[int]:
    sites: set[int] = set()
    for _, b in schedule.cones[k].gates:
        sites.update((b, b + 1))
    return sites


def cone_width(schedule: LightConeSchedule, k: int) -> int:
    """Number of distinct sites touched by the gates of cone ``k``."""
    return len(cone_sites(schedule, k))


def mirror_schedule(schedule: LightConeSchedule) -> LightConeSchedule:
    """Right-to-left schedule, expressed on the mirrored chain (site i -> N-1-i)."""
    return assign_cones(schedule.circuit.mirrored())
