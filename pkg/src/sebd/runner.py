"""Trajectory farming, aggregation and file output.

Sites and bonds are 1-based in every file the runner writes: bond ``l`` cuts
the chain between sites ``l`` and ``l+1``. Trajectory ``i`` draws its random
stream from ``SeedSequence([master_seed, i])`` and results are merged in index
order, so the worker count never changes a single output byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from multiprocessing import get_context
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .circuit import MODELS, BrickworkCircuit, ModelParams, build_circuit
from .engines import ENGINES, PROJECTION_BASES, EngineConfig, run_sebd_trajectory, run_tebd
from .estimators import (
    EqualTimeSuite,
    EstimatorAccumulator,
    ObservableSpec,
    make_suite,
    normalized_cross,
    parse_observable,
)
from .lightcone import LightConeSchedule, assign_cones, mirror_schedule
from .mps import MpsState, neel_state, product_state, random_mps
from .operators import spin
from .tensor import TruncationPolicy

FORMATS = ("csv", "json")
ESTIMATOR_COLUMNS = ("time", "site_or_bond", "quantity", "mean", "variance", "stderr", "n_samples")
PROFILE_COLUMNS = ("time", "bond", "entropy_pre", "entropy_post", "chi_pre")
PEAK_QUANTITIES = ("peak_entropy", "peak_chi")


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run.

    ``profile_cell`` is 0-based (``None`` selects the central cell). ``initial``
    is ``neel``, ``up``, a bitstring such as ``0101``, or ``random:<chi>:<seed>``.
    """

    model: str = "kicked_ising"
    n_sites: int = 32
    times: tuple[float, ...] = (4.0,)
    dt: float = 1.0
    J: float = math.pi / 8
    h: float = 0.2
    epsilon: float = 1e-8
    chi_max: int | None = None
    engine: str = "sebd"
    basis: str | None = None
    observables: tuple[str, ...] = ("sx",)
    n_samples: int = 100
    master_seed: int = 0
    workers: int = 1
    output: str = "sebd_out.csv"
    output_format: str = "csv"
    profile_cell: int | None = None
    initial: str = "neel"
    specs: tuple[ObservableSpec, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if self.output_format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.n_samples < 1:
            raise ValueError("samples must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not self.times:
            raise ValueError("at least one time is required")
        for t in self.times:
            self.params(t)  # validates n, dt, t
        TruncationPolicy(self.epsilon, self.chi_max)
        specs = tuple(parse_observable(o) for o in self.observables)
        for spec in specs:
            spec.check_chain(self.n_sites)
        object.__setattr__(self, "specs", specs)
        if self.basis is not None and self.basis not in PROJECTION_BASES:
            raise ValueError(f"basis must be one of {PROJECTION_BASES}")
        for group in self.groups():
            need = make_suite(group).required_basis
            if need is not None and self.basis not in (None, need):
                raise ValueError(f"{group[0].name} needs projection basis {need}, config has {self.basis}")
        n_cells = (self.n_sites + 1) // 2
        if self.profile_cell is not None and not 0 <= self.profile_cell < n_cells:
            raise ValueError(f"profile cell must lie in 1..{n_cells}")
        self.initial_state()

    def params(self, t: float) -> ModelParams:
        return ModelParams(self.model, self.n_sites, t, self.dt, self.J, self.h)

    @property
    def policy(self) -> TruncationPolicy:
        return TruncationPolicy(self.epsilon, self.chi_max)

    def groups(self) -> list[list[ObservableSpec]]:
        """Observables sharing trajectories: all one-point ones together, each correlator alone."""
        one_point = [s for s in self.specs if s.kind == "one_point"]
        groups = [one_point] if one_point else []
        groups += [[s] for s in self.specs if s.kind != "one_point"]
        return groups

    def engine_config(self, group: Sequence[ObservableSpec]) -> EngineConfig:
        basis = self.basis or make_suite(group).required_basis or "z"
        return EngineConfig(
            engine=self.engine,
            policy=self.policy,
            projection_basis=basis,
            record_profiles=False,
            profile_cell=self.profile_cell,
        )

    def initial_state(self) -> MpsState:
        return _initial_state(self.initial, self.n_sites)


def _initial_state(label: str, n: int) -> MpsState:
    if label == "neel":
        return neel_state(n)
    if label == "up":
        return product_state(["up"] * n)
    if label.startswith("random:"):
        try:
            _, chi, seed = label.split(":")
            return random_mps(n, int(chi), int(seed))
        except ValueError as exc:
            raise ValueError(f"random initial state must read random:<chi>:<seed>, got {label!r}") from exc
    if len(label) == n and set(label) <= {"0", "1"}:
        return product_state(list(label))
    raise ValueError(f"unknown initial state {label!r}")


def trajectory_seed(master_seed: int, index: int) -> int:
    """Stable 64-bit seed of trajectory ``index``."""
    state = np.random.SeedSequence([master_seed, index]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _stream_seed(seed: int, group: int, mirrored: bool) -> int:
    state = np.random.SeedSequence([seed, group, int(mirrored)]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


# -- single trajectories --------------------------------------------------------


@lru_cache(maxsize=32)
def _schedule(params: ModelParams) -> LightConeSchedule:
    return assign_cones(build_circuit(params))


@lru_cache(maxsize=32)
def _mirrored(params: ModelParams) -> LightConeSchedule:
    return mirror_schedule(_schedule(params))


@lru_cache(maxsize=8)
def _cached_initial(label: str, n: int) -> MpsState:
    return _initial_state(label, n)


@dataclass
class TrajectoryResult:
    values: dict[str, np.ndarray]
    peak_entropy: float
    peak_chi: float
    run_peak_chi: float
    entropy_pre: np.ndarray
    entropy_post: np.ndarray
    chi_pre: np.ndarray


def _split_complex(name: str, values: np.ndarray, out: dict[str, np.ndarray]) -> None:
    if np.iscomplexobj(values):
        out[f"{name}.re"] = values.real.copy()
        out[f"{name}.im"] = values.imag.copy()
    else:
        out[name] = np.asarray(values, dtype=float)


def sebd_trajectory(config: RunConfig, t: float, index: int) -> TrajectoryResult:
    """Run every observable group once for trajectory ``index`` at final time ``t``."""
    params = config.params(t)
    schedule = _schedule(params)
    initial = _cached_initial(config.initial, config.n_sites)
    seed = trajectory_seed(config.master_seed, index)
    values: dict[str, np.ndarray] = {}
    peak_record = None
    groups = config.groups() or [[]]
    for g, group in enumerate(groups):
        engine = config.engine_config(group)
        suite = make_suite(group) if group else None
        rec = run_sebd_trajectory(initial, schedule, engine, suite, _stream_seed(seed, g, False))
        peak_record = peak_record or rec
        for name, vals in rec.estimates.items():
            _split_complex(name, vals, values)
        spec = group[0] if len(group) == 1 else None
        if spec is not None and spec.kind == "equal_time" and spec.protocol == "em" and spec.reference_site > 0:
            # sites left of the reference come from a right-to-left pass on the mirrored chain
            n = config.n_sites
            mspec = ObservableSpec("equal_time", spec.alpha, spec.alpha, n - 1 - spec.reference_site)
            mrec = run_sebd_trajectory(
                initial.reversed(), _mirrored(params), engine, EqualTimeSuite(mspec), _stream_seed(seed, g, True)
            )
            left = mrec.estimates[mspec.name][::-1]
            merged = values[spec.name]
            merged[: spec.reference_site] = left[: spec.reference_site]
    cell = peak_record.profiles[0].cell
    pre, post = peak_record.profile(cell, "pre"), peak_record.profile(cell, "post")
    return TrajectoryResult(
        values,
        peak_record.peak_entropy,
        float(peak_record.peak_chi),
        float(peak_record.run_peak_chi),
        pre.entropies,
        post.entropies,
        pre.bond_dims.astype(float),
    )


def _worker(task: tuple[RunConfig, float, int]) -> TrajectoryResult:
    return sebd_trajectory(*task)


# -- aggregation ---------------------------------------------------------------


@dataclass
class RunSummary:
    estimator_rows: list[dict]
    profile_rows: list[dict]
    files: list[str]
    elapsed: float

    def rows(self, quantity: str, time: float | None = None) -> list[dict]:
        return [r for r in self.estimator_rows if r["quantity"] == quantity and (time is None or r["time"] == time)]

    def series(self, quantity: str, time: float, column: str = "mean") -> np.ndarray:
        return np.array([r[column] for r in self.rows(quantity, time)])


def _estimator_rows(t: float, name: str, acc: EstimatorAccumulator, offset: int = 1) -> list[dict]:
    var, se = acc.variance(), acc.stderr()
    return [
        {
            "time": t,
            "site_or_bond": i + offset,
            "quantity": name,
            "mean": float(acc.mean[i]),
            "variance": float(var[i]),
            "stderr": float(se[i]),
            "n_samples": acc.count,
        }
        for i in range(acc.size)
    ]


def _peak_row(t: float, name: str, acc: EstimatorAccumulator) -> dict:
    row = _estimator_rows(t, name, acc)[0]
    row["site_or_bond"] = None
    return row


def _run_sebd_time(config: RunConfig, t: float, pool: ProcessPoolExecutor | None) -> tuple[list[dict], list[dict]]:
    tasks = [(config, t, i) for i in range(config.n_samples)]
    results = pool.map(_worker, tasks, chunksize=max(1, len(tasks) // (8 * config.workers))) if pool else map(_worker, tasks)
    accs: dict[str, EstimatorAccumulator] = {}
    peaks = {q: EstimatorAccumulator(1) for q in PEAK_QUANTITIES}
    profile = {c: EstimatorAccumulator(config.n_sites - 1) for c in PROFILE_COLUMNS[2:]}
    for res in results:  # index order, whatever the worker count
        for name, vals in res.values.items():
            accs.setdefault(name, EstimatorAccumulator(config.n_sites)).push(vals)
        peaks["peak_entropy"].push([res.peak_entropy])
        peaks["peak_chi"].push([res.peak_chi])
        profile["entropy_pre"].push(res.entropy_pre)
        profile["entropy_post"].push(res.entropy_post)
        profile["chi_pre"].push(res.chi_pre)
    rows = []
    for name in sorted(accs, key=_quantity_order(config)):
        rows += _estimator_rows(t, name, accs[name])
    rows += [_peak_row(t, q, peaks[q]) for q in PEAK_QUANTITIES]
    prof = [
        {"time": t, "bond": b + 1, **{c: float(profile[c].mean[b]) for c in PROFILE_COLUMNS[2:]}}
        for b in range(config.n_sites - 1)
    ]
    return rows, prof


def _quantity_order(config: RunConfig) -> Callable[[str], tuple[int, int, str]]:
    names = [s.name for s in config.specs]

    def key(q: str) -> tuple[int, int, str]:
        base, part = (q[:-3], q[-2:]) if q.endswith((".re", ".im")) else (q, "")
        return (names.index(base) if base in names else len(names), part == "im", q)

    return key


def _run_tebd(config: RunConfig) -> tuple[list[dict], list[dict]]:
    """One deterministic TEBD run; every protocol reduces to the exact expectation value."""
    t_max = max(config.times)
    circuit: BrickworkCircuit = build_circuit(config.params(t_max))
    initial = config.initial_state()
    uneq = [s for s in config.specs if s.kind == "unequal_time"]
    companions = []
    for spec in uneq:
        comp = initial.copy()
        comp.apply_single_site(spec.reference_site, spin(spec.beta))
        companions.append(comp)
    n = config.n_sites
    found: dict[float, dict[str, np.ndarray]] = {}

    def observe(t: float, state: MpsState, comps: list[MpsState]) -> None:
        values: dict[str, np.ndarray] = {}
        for spec in config.specs:
            op = spin(spec.alpha)
            if spec.kind == "one_point":
                vals = np.array([state.expect_local(i, op) for i in range(n)])
            elif spec.kind == "equal_time":
                ref = spec.reference_site
                vals = np.array([state.expect_two_site(min(ref, i), op, max(ref, i), op) for i in range(n)])
            else:
                comp = comps[uneq.index(spec)]
                vals = np.array([normalized_cross(state, comp, i, op) for i in range(n)])
            _split_complex(spec.name, vals, values)
        found[t] = values

    engine = EngineConfig("tebd", config.policy, snapshot_times=tuple(config.times))
    _, diag = run_tebd(initial, circuit, engine, companions=companions, observer=observe)
    rows, prof = [], []
    for t in sorted(set(config.times)):
        key = round(float(t), 9)
        values = found[key]
        for name in sorted(values, key=_quantity_order(config)):
            acc = EstimatorAccumulator(n)
            acc.push(values[name])
            rows += _estimator_rows(key, name, acc)
        profile = diag.profiles[key]
        for q, v in (("peak_entropy", profile.peak_entropy), ("peak_chi", profile.peak_chi)):
            acc = EstimatorAccumulator(1)
            acc.push([v])
            rows.append(_peak_row(key, q, acc))
        prof += [
            {
                "time": key,
                "bond": b + 1,
                "entropy_pre": float(profile.entropies[b]),
                "entropy_post": float("nan"),
                "chi_pre": float(profile.bond_dims[b]),
            }
            for b in range(n - 1)
        ]
    return rows, prof


# -- output --------------------------------------------------------------------


def profile_path(output: str | os.PathLike) -> Path:
    path = Path(output)
    return path.with_name(f"{path.stem}.profile{path.suffix}")


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(rows: Sequence[Mapping], columns: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        clean = [{c: (None if isinstance(r[c], float) and math.isnan(r[c]) else r[c]) for c in columns} for r in rows]
        return json.dumps(clean, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_format_value(r[c]) for c in columns])
    return buf.getvalue()


def check_writable(path: str | os.PathLike) -> None:
    """Fail early (before any trajectory) if an output file cannot be created."""
    path = Path(path)
    parent = path.parent if str(path.parent) else Path(".")
    if not parent.is_dir():
        raise OSError(f"output directory {parent} does not exist")
    if not os.access(parent, os.W_OK) or (path.exists() and not os.access(path, os.W_OK)):
        raise OSError(f"cannot write {path}")


def run(config: RunConfig, *, write: bool = True) -> RunSummary:
    """Execute all trajectories (or the single TEBD run) and write the two output files."""
    start = _time.perf_counter()
    if write:
        check_writable(config.output)
        check_writable(profile_path(config.output))
    rows: list[dict] = []
    prof: list[dict] = []
    if config.engine == "tebd":
        rows, prof = _run_tebd(config)
    else:
        pool = None
        if config.workers > 1:
            pool = ProcessPoolExecutor(config.workers, mp_context=get_context("fork"))
        try:
            for t in sorted(set(config.times)):
                r, p = _run_sebd_time(config, round(float(t), 9), pool)
                rows += r
                prof += p
        finally:
            if pool is not None:
                pool.shutdown()
    files = []
    if write:
        Path(config.output).write_text(render(rows, ESTIMATOR_COLUMNS, config.output_format))
        profile_file = profile_path(config.output)
        profile_file.write_text(render(prof, PROFILE_COLUMNS, config.output_format))
        files = [str(config.output), str(profile_file)]
    return RunSummary(rows, prof, files, _time.perf_counter() - start)



# -- verification ---------------------------------------------------------------


@dataclass
class Check:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)

    def as_dict(self) -> dict:
        return {"name": self.name, "error": self.error, "tolerance": self.tolerance, "passed": self.passed}


def verify(builder: Callable[[ModelParams], BrickworkCircuit] = build_circuit) -> dict:
    """Oracle-equivalence and branch-enumeration checks on small chains.

    ``builder`` maps model parameters to a circuit; tests swap it for a faulty
    one to confirm that the checks catch gate errors.

    Returns:
        ``{"passed": bool, "checks": [...]}`` with the worst error of each check.
    """
    from . import oracle
    from .engines import cone_ordered_state
    from .estimators import OnePointSuite

    checks: list[Check] = []

    err = 0.0
    for n in range(2, 9):
        params = ModelParams("kicked_ising", n, 1.0)
        u = oracle.circuit_unitary(builder(params))
        err = max(err, float(np.max(np.abs(u - oracle.ising_floquet_operator(params)))))
    checks.append(Check("period_operator_identity", err, 1e-10))

    params = ModelParams("kicked_ising", 8, 4.0)
    circuit = builder(params)
    initial = neel_state(8)
    dense = oracle.evolve_dense(oracle.DenseState.from_mps(initial), circuit)
    state, _ = run_tebd(initial, circuit, EngineConfig("tebd", TruncationPolicy(1e-12)))
    sx = spin("x")
    err = max(abs(state.expect_local(i, sx) - oracle.expect_dense(dense, {i: sx}).real) for i in range(8))
    checks.append(Check("tebd_vs_dense_sx", float(err), 1e-8))

    err = 0.0
    for model, dt in (("kicked_ising", 1.0), ("heisenberg", 0.25)):
        params = ModelParams(model, 8, 4 * dt, dt)
        circuit = builder(params)
        ref = oracle.evolve_dense(oracle.DenseState.from_mps(initial), circuit).amplitudes
        out = cone_ordered_state(initial, assign_cones(circuit)).to_dense()
        err = max(err, 1.0 - abs(np.vdot(ref, out)) / (np.linalg.norm(ref) * np.linalg.norm(out)))
        err = max(err, abs(np.linalg.norm(ref) - np.linalg.norm(out)))
    checks.append(Check("cone_order_vs_layer_order", float(err), 1e-10))

    params = ModelParams("kicked_ising", 6, 2.0)
    circuit = builder(params)
    schedule = assign_cones(circuit)
    initial = neel_state(6)
    dense = oracle.evolve_dense(oracle.DenseState.from_mps(initial), circuit)
    for basis, proto in (("z", "em"), ("x", "bitstring"), ("rdm", "rdm")):
        spec = ObservableSpec("one_point", "x", protocol=proto)
        total = oracle.enumerate_branches(initial, schedule, OnePointSuite([spec]), basis)
        exact = oracle.one_point_dense(dense, sx)
        err = float(np.max(np.abs(total.values[spec.name] - exact)))
        err = max(err, abs(total.total_probability - 1.0))
        checks.append(Check(f"enumeration_one_point_{proto}", err, 1e-10))

    return {"passed": all(c.passed for c in checks), "checks": [c.as_dict() for c in checks]}
