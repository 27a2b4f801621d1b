"""Observable estimators evaluated along SEBD trajectories, plus streaming statistics.

Protocols:

* ``em``        expectation value on the still-entangled state right before collapse
* ``bitstring`` eigenvalue of the measured outcome (needs the observable's eigenbasis)
* ``rdm``       trace of the single-site density matrix against the observable

Unequal-time correlators carry a second copy ``S^beta_ref |psi0>`` through the
same gates. It is projected onto the outcomes sampled on the physical copy, so
both copies pick up the same projector; dividing by the physical copy's norm
then rescales the second copy by ``1/sqrt(p)`` with ``p`` the physical Born
probability, which keeps the per-trajectory estimate unbiased.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engines import EngineConfig, Measurement, TrajectoryRecord, run_sebd_trajectory
from .lightcone import LightConeSchedule, mirror_schedule, unit_cells
from .mps import Chooser, MpsState, cross_expect
from .operators import spin

KINDS = ("one_point", "equal_time", "unequal_time")
PROTOCOLS = ("em", "bitstring", "rdm")
COMPONENTS = ("x", "y", "z")

_GRAMMAR = re.compile(r"^(?:s(?P<a1>[xyz])|(?P<kind>[cu])(?P<a>[xyz])(?P<b>[xyz])@(?P<ref>\d+))(?::(?P<proto>em|bitstring|rdm))?$")


@dataclass(frozen=True)
class ObservableSpec:
    """What to estimate. ``reference_site`` is 0-based."""

    kind: str
    alpha: str
    beta: str | None = None
    reference_site: int | None = None
    protocol: str = "em"

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        if self.alpha not in COMPONENTS or (self.beta is not None and self.beta not in COMPONENTS):
            raise ValueError("spin components must be x, y or z")
        if self.kind != "one_point" and self.reference_site is None:
            raise ValueError("correlators need a reference site")
        if self.kind == "equal_time" and self.beta not in (None, self.alpha):
            raise ValueError("equal-time correlators are C^{aa}")
        if self.kind == "unequal_time" and self.protocol != "em":
            raise ValueError("unequal-time correlators use the em protocol")
        if self.kind == "equal_time" and self.protocol == "rdm":
            raise ValueError("equal-time correlators support em and bitstring")

    @property
    def name(self) -> str:
        """Grammar form with 1-based reference site, e.g. ``sx``, ``czz@51``, ``uzx@50``."""
        if self.kind == "one_point":
            base = f"s{self.alpha}"
        else:
            letter = "c" if self.kind == "equal_time" else "u"
            base = f"{letter}{self.alpha}{self.beta or self.alpha}@{self.reference_site + 1}"
        return base if self.protocol == "em" else f"{base}:{self.protocol}"

    def check_chain(self, n_sites: int) -> None:
        if self.reference_site is not None and not 0 <= self.reference_site < n_sites:
            raise ValueError(f"reference site {self.reference_site + 1} outside chain of {n_sites}")


def parse_observable(text: str) -> ObservableSpec:
    """Parse ``sx``, ``czz@51``, ``uzz@50``, ``uzx@50`` (optional ``:bitstring``/``:rdm``).

    Reference sites in the text are 1-based.
    """
    m = _GRAMMAR.match(text.strip().lower())
    if m is None:
        raise ValueError(f"cannot parse observable {text!r}")
    proto = m["proto"] or "em"
    if m["a1"]:
        return ObservableSpec("one_point", m["a1"], protocol=proto)
    ref = int(m["ref"]) - 1
    if ref < 0:
        raise ValueError("reference sites are 1-based")
    if m["kind"] == "c":
        if m["a"] != m["b"]:
            raise ValueError("equal-time correlators are C^{aa}")
        return ObservableSpec("equal_time", m["a"], m["a"], ref, proto)
    return ObservableSpec("unequal_time", m["a"], m["b"], ref, proto)


# -- single estimators --------------------------------------------------------


def em_one_point(state: MpsState, sites: Sequence[int], alpha: str) -> np.ndarray:
    op = spin(alpha)
    return np.array([state.expect_local(s, op) for s in sites])


def rdm_one_point(state: MpsState, site: int, alpha: str) -> float:
    return state.one_body_rdm(site).expect(spin(alpha))


def bitstring_one_point(measurement: Measurement, alpha: str) -> float:
    """Eigenvalue +-1/2 of the outcome; the site must have been measured in the alpha basis."""
    if measurement.basis != alpha:
        raise ValueError(f"bitstring S^{alpha} needs the {alpha} basis, site was measured in {measurement.basis}")
    return 0.5 if measurement.outcome == 0 else -0.5


def normalized_cross(state: MpsState, perturbed: MpsState, site: int, op: np.ndarray) -> complex:
    """<v1|O|v2> / <v1|v1> for the physical copy v1 and the operator-inserted copy v2."""
    if perturbed.is_zero:
        return 0j
    raw = cross_expect(state, perturbed, site, op, include_amplitudes=False)
    # v_i = exp(a_i) psi_i and only the ratio of amplitudes survives
    return complex(raw * np.exp(perturbed.log_amplitude - state.log_amplitude) / state.norm() ** 2)


# -- trajectory protocols -----------------------------------------------------


class OnePointSuite:
    """Any mix of one-point estimators sharing one trajectory."""

    def __init__(self, specs: Sequence[ObservableSpec]) -> None:
        if any(s.kind != "one_point" for s in specs):
            raise ValueError("OnePointSuite takes one-point observables only")
        self.specs = list(specs)
        bit = {s.alpha for s in specs if s.protocol == "bitstring"}
        if len(bit) > 1:
            raise ValueError("bitstring estimators of different components cannot share a trajectory")
        self.required_basis = bit.pop() if bit else None

    def exempt_sites(self, n_sites):
        return frozenset()

    def companions(self, initial):
        return []

    def begin(self, n_sites):
        return {s.name: np.full(n_sites, np.nan) for s in self.specs}

    def before_projection(self, cell, sites, state, companions, estimates):
        for spec in self.specs:
            if spec.protocol == "em":
                estimates[spec.name][list(sites)] = em_one_point(state, sites, spec.alpha)
            elif spec.protocol == "rdm":
                for s in sites:
                    estimates[spec.name][s] = rdm_one_point(state, s, spec.alpha)

    def after_projection(self, cell, measurements, estimates):
        for spec in self.specs:
            if spec.protocol == "bitstring":
                for m in measurements:
                    estimates[spec.name][m.site] = bitstring_one_point(m, spec.alpha)

    def finish(self, record):
        pass


class EqualTimeSuite:
    """C^{aa}(ref, l') for l' >= ref (em) or for all l' (bitstring)."""

    def __init__(self, spec: ObservableSpec) -> None:
        if spec.kind != "equal_time":
            raise ValueError("EqualTimeSuite takes an equal-time observable")
        self.spec = spec
        self.ref = spec.reference_site
        self.op = spin(spec.alpha)
        self.required_basis = spec.alpha if spec.protocol == "bitstring" else None

    def exempt_sites(self, n_sites):
        if self.spec.protocol == "bitstring":
            return frozenset()
        for cell in unit_cells(n_sites):
            if self.ref in cell:
                return frozenset(cell)
        raise ValueError("reference site outside the chain")

    def companions(self, initial):
        return []

    def begin(self, n_sites):
        self.spec.check_chain(n_sites)
        return {self.spec.name: np.full(n_sites, np.nan)}

    def before_projection(self, cell, sites, state, companions, estimates):
        if self.spec.protocol != "em":
            return
        values = estimates[self.spec.name]
        for s in sites:
            if s >= self.ref and cell >= self.ref // 2:
                values[s] = state.expect_two_site(self.ref, self.op, s, self.op)

    def after_projection(self, cell, measurements, estimates):
        pass

    def finish(self, record):
        if self.spec.protocol != "bitstring":
            return
        eig = {m.site: bitstring_one_point(m, self.spec.alpha) for m in record.measurements}
        values = record.estimates[self.spec.name]
        for s, v in eig.items():
            values[s] = v * eig[self.ref] if s != self.ref else 0.25


class UnequalTimeSuite:
    """<S^a_l(t) S^b_ref(0)> for every site l, as a complex number."""

    required_basis = None

    def __init__(self, spec: ObservableSpec) -> None:
        if spec.kind != "unequal_time":
            raise ValueError("UnequalTimeSuite takes an unequal-time observable")
        self.spec = spec
        self.op_t = spin(spec.alpha)
        self.op_0 = spin(spec.beta or spec.alpha)

    def exempt_sites(self, n_sites):
        return frozenset()

    def companions(self, initial):
        self.spec.check_chain(initial.n_sites)
        perturbed = initial.copy()
        perturbed.apply_single_site(self.spec.reference_site, self.op_0)
        return [perturbed]

    def begin(self, n_sites):
        return {self.spec.name: np.full(n_sites, np.nan, dtype=np.complex128)}

    def before_projection(self, cell, sites, state, companions, estimates):
        (perturbed,) = companions
        values = estimates[self.spec.name]
        for s in sites:
            values[s] = normalized_cross(state, perturbed, s, self.op_t)

    def after_projection(self, cell, measurements, estimates):
        pass

    def finish(self, record):
        pass


def make_suite(specs: Sequence[ObservableSpec]):
    specs = list(specs)
    if all(s.kind == "one_point" for s in specs):
        return OnePointSuite(specs)
    if len(specs) != 1:
        raise ValueError("a correlator runs in its own trajectories, one observable per suite")
    spec = specs[0]
    if spec.kind == "equal_time":
        return EqualTimeSuite(spec)
    return UnequalTimeSuite(spec)


def _mirror_values(values: np.ndarray) -> np.ndarray:
    return values[::-1].copy()


def equal_time_correlator_trajectory(
    initial: MpsState,
    schedule: LightConeSchedule,
    ref: int,
    alpha: str,
    seed: int | None = None,
    *,
    config: EngineConfig = EngineConfig(),
    chooser: Chooser | None = None,
    mirrored: bool = False,
) -> np.ndarray:
    """C^{aa}(ref, l') from one em trajectory.

    Left-to-right gives ``l' >= ref``; ``mirrored=True`` runs right to left on
    the reflected chain and gives ``l' <= ref``. Other entries are NaN.
    """
    n = initial.n_sites
    if mirrored:
        spec = ObservableSpec("equal_time", alpha, alpha, n - 1 - ref)
        rec = run_sebd_trajectory(
            initial.reversed(), mirror_schedule(schedule), config, EqualTimeSuite(spec), seed, chooser=chooser
        )
        return _mirror_values(rec.estimates[spec.name])
    spec = ObservableSpec("equal_time", alpha, alpha, ref)
    rec = run_sebd_trajectory(initial, schedule, config, EqualTimeSuite(spec), seed, chooser=chooser)
    return rec.estimates[spec.name]


def unequal_time_trajectory(
    initial: MpsState,
    schedule: LightConeSchedule,
    ref: int,
    alpha: str,
    beta: str,
    seed: int | None = None,
    *,
    config: EngineConfig = EngineConfig(),
    chooser: Chooser | None = None,
) -> np.ndarray:
    """<S^alpha_l(t) S^beta_ref(0)> for every l from one two-copy trajectory."""
    spec = ObservableSpec("unequal_time", alpha, beta, ref)
    rec = run_sebd_trajectory(initial, schedule, config, UnequalTimeSuite(spec), seed, chooser=chooser)
    return rec.estimates[spec.name]


# -- statistics ---------------------------------------------------------------


class EstimatorAccumulator:
    """Streaming count, mean and summed squared deviation per site (Welford/Chan updates)."""

    def __init__(self, size: int) -> None:
        self.count = 0
        self.mean = np.zeros(size)
        self.m2 = np.zeros(size)

    @property
    def size(self) -> int:
        return self.mean.size

    def push(self, values) -> None:
        x = np.asarray(values, dtype=float)
        if x.shape != self.mean.shape:
            raise ValueError(f"expected {self.mean.shape}, got {x.shape}")
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    def variance(self, ddof: int = 1) -> np.ndarray:
        """Per-sample variance; zero when there are too few samples."""
        if self.count <= ddof:
            return np.zeros_like(self.mean)
        return np.maximum(self.m2 / (self.count - ddof), 0.0)

    def stderr(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.mean)
        return np.sqrt(self.variance() / self.count)

    def copy(self) -> EstimatorAccumulator:
        new = EstimatorAccumulator(self.size)
        new.count, new.mean, new.m2 = self.count, self.mean.copy(), self.m2.copy()
        return new


def merge(a: EstimatorAccumulator, b: EstimatorAccumulator) -> EstimatorAccumulator:
    """Combine two accumulators as if all samples went through one stream."""
    if a.size != b.size:
        raise ValueError(f"shape mismatch: {a.size} vs {b.size}")
    if b.count == 0:
        return a.copy()
    if a.count == 0:
        return b.copy()
    out = EstimatorAccumulator(a.size)
    n = a.count + b.count
    delta = b.mean - a.mean
    out.count = n
    out.mean = (a.count * a.mean + b.count * b.mean) / n
    out.m2 = a.m2 + b.m2 + delta**2 * (a.count * b.count / n)
    return out


def windowed_variance(acc: EstimatorAccumulator, center: int, width: int) -> float:
    """Mean per-site variance over sites ``center - width//2 .. center + width//2``.

    The window holds ``width + 1`` sites for even ``width``; sites are 0-based.
    """
    lo, hi = center - width // 2, center + width // 2
    if lo < 0 or hi >= acc.size:
        raise ValueError(f"window [{lo}, {hi}] outside chain of {acc.size}")
    return float(np.sum(acc.variance()[lo : hi + 1]) / (width + 1))


def windowed_mean(acc: EstimatorAccumulator, center: int, width: int) -> float:
    lo, hi = center - width // 2, center + width // 2
    if lo < 0 or hi >= acc.size:
        raise ValueError(f"window [{lo}, {hi}] outside chain of {acc.size}")
    return float(np.mean(acc.mean[lo : hi + 1]))
