"""TEBD (layer order) and SEBD (light-cone order with projective collapse) drivers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .circuit import BrickworkCircuit
from .lightcone import LightConeSchedule
from .mps import Chooser, EntanglementProfile, MpsState, ZeroProbabilityBranch, rng_chooser
from .operators import MEASUREMENT_BASES
from .tensor import EXACT, TruncationPolicy

ENGINES = ("tebd", "sebd")
PROJECTION_BASES = ("z", "x", "y", "rdm")


@dataclass(frozen=True)
class EngineConfig:
    engine: str = "sebd"
    policy: TruncationPolicy = EXACT
    projection_basis: str = "z"
    record_profiles: bool = True
    snapshot_times: tuple[float, ...] = ()
    profile_cell: int | None = None  # SEBD peak statistics; None selects the central cell

    def __post_init__(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.projection_basis not in PROJECTION_BASES:
            raise ValueError(f"projection basis must be one of {PROJECTION_BASES}")


@dataclass(frozen=True)
class Measurement:
    site: int
    basis: str
    outcome: int
    probability: float


@dataclass(frozen=True)
class ProfileSnapshot:
    cell: int
    stage: str  # "pre" or "post" projection
    profile: EntanglementProfile


@dataclass
class TrajectoryRecord:
    seed: int | None
    time: float
    measurements: list[Measurement] = field(default_factory=list)
    estimates: dict[str, np.ndarray] = field(default_factory=dict)
    profiles: list[ProfileSnapshot] = field(default_factory=list)
    peak_entropy: float = 0.0
    peak_chi: int = 1
    run_peak_chi: int = 1

    @property
    def born_weight(self) -> float:
        return float(np.prod([m.probability for m in self.measurements]))

    def profile(self, cell: int, stage: str = "pre") -> EntanglementProfile:
        for snap in self.profiles:
            if snap.cell == cell and snap.stage == stage:
                return snap.profile
        raise KeyError((cell, stage))


class EstimatorSuite(Protocol):
    """Hooks through which an estimator protocol observes one SEBD trajectory."""

    required_basis: str | None

    def exempt_sites(self, n_sites: int) -> frozenset[int]: ...

    def companions(self, initial: MpsState) -> list[MpsState]: ...

    def begin(self, n_sites: int) -> dict[str, np.ndarray]: ...

    def before_projection(
        self, cell: int, sites: Sequence[int], state: MpsState, companions: list[MpsState], estimates: dict
    ) -> None: ...

    def after_projection(self, cell: int, measurements: list[Measurement], estimates: dict) -> None: ...

    def finish(self, record: TrajectoryRecord) -> None: ...


class NoEstimators:
    required_basis = None

    def exempt_sites(self, n_sites):
        return frozenset()

    def companions(self, initial):
        return []

    def begin(self, n_sites):
        return {}

    def before_projection(self, cell, sites, state, companions, estimates):
        pass

    def after_projection(self, cell, measurements, estimates):
        pass

    def finish(self, record):
        pass


@dataclass
class TebdDiagnostics:
    times: list[float] = field(default_factory=list)
    profiles: dict[float, EntanglementProfile] = field(default_factory=dict)
    total_discarded_weight: float = 0.0
    truncations_by_epsilon: int = 0
    truncations_by_chi_max: int = 0

    def peak_entropy(self, t: float) -> float:
        return self.profiles[_time_key(t)].peak_entropy

    def peak_chi(self, t: float) -> int:
        return self.profiles[_time_key(t)].peak_chi


def _time_key(t: float) -> float:
    return round(float(t), 9)


Observer = Callable[[float, MpsState, list[MpsState]], None]


def run_tebd(
    state: MpsState,
    circuit: BrickworkCircuit,
    config: EngineConfig = EngineConfig(engine="tebd"),
    *,
    companions: Iterable[MpsState] = (),
    observer: Observer | None = None,
) -> tuple[MpsState, TebdDiagnostics]:
    """Apply the circuit layer by layer with truncation after every gate.

    Copies of ``state`` and ``companions`` are evolved with identical gates. At
    each time in ``config.snapshot_times`` the entanglement profile is recorded
    (if ``record_profiles``) and ``observer(time, state, companions)`` is called.
    """
    state = state.copy()
    comps = [c.copy() for c in companions]
    diag = TebdDiagnostics()
    snapshots = {_time_key(t) for t in config.snapshot_times}

    def snapshot(t: float) -> None:
        key = _time_key(t)
        if key not in snapshots:
            return
        diag.times.append(key)
        if config.record_profiles:
            diag.profiles[key] = state.entanglement_profile()
        if observer is not None:
            observer(key, state, comps)

    snapshot(0.0)
    for index, layer in enumerate(circuit.layers):
        # serpentine sweep keeps orthogonality-center moves short; gates in a layer commute
        ascending = index % 2 == 0
        for bond in sorted(layer.gates, reverse=not ascending):
            gate = layer.gates[bond]
            for target in [state, *comps]:
                rep = target.apply_two_site_gate(
                    bond, gate, config.policy, center_to="right" if ascending else "left", check=False
                )
                if target is state:
                    diag.total_discarded_weight += rep.discarded_weight
                    diag.truncations_by_epsilon += rep.bound_by == "epsilon"
                    diag.truncations_by_chi_max += rep.bound_by == "chi_max"
        if index % 2 == 1:
            snapshot((index + 1) // 2 * circuit.dt)
    return state, diag


def measurement_basis(state: MpsState, site: int, basis: str) -> np.ndarray:
    if basis == "rdm":
        return state.one_body_rdm(site).eigenvectors
    return MEASUREMENT_BASES[basis]


def central_cell(n_cells: int) -> int:
    return (n_cells - 1) // 2


def run_sebd_trajectory(
    initial: MpsState,
    schedule: LightConeSchedule,
    config: EngineConfig = EngineConfig(),
    suite: EstimatorSuite | None = None,
    seed: int | None = None,
    *,
    chooser: Chooser | None = None,
    project: bool = True,
) -> TrajectoryRecord:
    """One SEBD sample: evolve cone by cone, estimate, then collapse each finished cell.

    Args:
        initial: Starting state (not modified).
        schedule: Light-cone partition of the circuit.
        config: Truncation policy, projection basis and profile recording.
        suite: Estimator protocol; ``None`` runs bare trajectories.
        seed: Seed of the private random stream.
        chooser: Replaces the random stream, e.g. to enumerate branches.
        project: ``False`` disables all measurements (cone-ordered evolution only).

    The record's ``peak_entropy`` and ``peak_chi`` are read off the
    pre-measurement profile of ``config.profile_cell`` (default: the central
    cell); ``run_peak_chi`` is the largest bond dimension met anywhere in the run.
    Pre and post profiles are kept for that cell, and for every cell when
    ``record_profiles`` is set.

    Raises:
        ZeroProbabilityBranch: If a sampled outcome had zero probability.
    """
    suite = suite if suite is not None else NoEstimators()
    if suite.required_basis is not None and suite.required_basis != config.projection_basis:
        raise ValueError(
            f"estimators need projection basis {suite.required_basis!r}, config has {config.projection_basis!r}"
        )
    circuit = schedule.circuit
    state = initial.copy()
    comps = suite.companions(state)
    if chooser is None:
        chooser = rng_chooser(np.random.default_rng(seed))
    exempt = suite.exempt_sites(state.n_sites)
    record = TrajectoryRecord(seed=seed, time=circuit.steps * circuit.dt)
    record.estimates = suite.begin(state.n_sites)
    policy = config.policy
    n_cells = schedule.cell_count
    peak_cell = central_cell(n_cells) if config.profile_cell is None else config.profile_cell
    if not 0 <= peak_cell < n_cells:
        raise ValueError(f"profile cell {peak_cell} outside 0..{n_cells - 1}")

    for k, cone in enumerate(schedule.cones):
        for gate_id in cone.gates:
            gate = circuit.gate(gate_id)
            for target in [state, *comps]:
                target.apply_two_site_gate(gate_id[1], gate, policy, check=False)
        keep = config.record_profiles or k == peak_cell
        if keep:
            pre = state.entanglement_profile()
            record.profiles.append(ProfileSnapshot(k, "pre", pre))
            if k == peak_cell:
                record.peak_entropy = pre.peak_entropy
                record.peak_chi = pre.peak_chi
        record.run_peak_chi = max(record.run_peak_chi, state.max_bond_dim)
        suite.before_projection(k, cone.cell, state, comps, record.estimates)
        if not project:
            if keep:
                record.profiles.append(ProfileSnapshot(k, "post", pre))
            continue
        cell_measurements = []
        for site in cone.cell:
            if site in exempt:
                continue
            basis = measurement_basis(state, site, config.projection_basis)
            probs = state.outcome_probabilities(site, basis)
            outcome = chooser(probs)
            try:
                p = state.project_site(site, basis[outcome])
            except ZeroProbabilityBranch as exc:
                raise ZeroProbabilityBranch(f"trajectory seed={seed}, cell {k}: {exc}") from exc
            for comp in comps:
                comp.project_site(site, basis[outcome], strict=False)
            cell_measurements.append(Measurement(site, config.projection_basis, outcome, p))
        record.measurements.extend(cell_measurements)
        suite.after_projection(k, cell_measurements, record.estimates)
        if keep:
            record.profiles.append(ProfileSnapshot(k, "post", state.entanglement_profile()))
    suite.finish(record)
    return record


def cone_ordered_state(initial: MpsState, schedule: LightConeSchedule, policy: TruncationPolicy = EXACT) -> MpsState:
    """Final state from applying the gates in schedule order, no measurements."""
    state = initial.copy()
    for cone in schedule.cones:
        for gate_id in cone.gates:
            state.apply_two_site_gate(gate_id[1], schedule.circuit.gate(gate_id), policy, check=False)
    return state


def entanglement_gap(
    sebd_runs: Sequence[TrajectoryRecord], tebd_diag: TebdDiagnostics
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per time: TEBD peak minus sample-averaged SEBD peak, for entropy and bond dimension.

    Returns:
        ``(times, entropy_gap, chi_gap)`` sorted by time.
    """
    by_time: dict[float, list[TrajectoryRecord]] = {}
    for rec in sebd_runs:
        by_time.setdefault(_time_key(rec.time), []).append(rec)
    missing = [t for t in by_time if t not in tebd_diag.profiles]
    if missing:
        raise ValueError(f"no TEBD snapshot at times {missing}")
    times = np.array(sorted(by_time))
    ds = np.array([tebd_diag.peak_entropy(t) - np.mean([r.peak_entropy for r in by_time[t]]) for t in times])
    dchi = np.array([tebd_diag.peak_chi(t) - np.mean([r.peak_chi for r in by_time[t]]) for t in times])
    return times, ds, dchi
