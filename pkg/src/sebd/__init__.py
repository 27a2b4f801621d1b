"""Light-cone MPS dynamics with mid-circuit projective measurements."""

from .circuit import BrickworkCircuit, ModelParams, build_circuit, build_heisenberg, build_kicked_ising
from .engines import EngineConfig, TrajectoryRecord, entanglement_gap, run_sebd_trajectory, run_tebd
from .estimators import EstimatorAccumulator, ObservableSpec, merge, parse_observable, windowed_variance
from .lightcone import LightConeSchedule, assign_cones, cone_width, mirror_schedule
from .mps import MpsState, cross_expect, neel_state, product_state, random_mps
from .tensor import SvdResult, TruncationPolicy, contract, svd_truncate

__version__ = "0.1.0"

__all__ = [
    "BrickworkCircuit",
    "EngineConfig",
    "EstimatorAccumulator",
    "LightConeSchedule",
    "ModelParams",
    "MpsState",
    "ObservableSpec",
    "SvdResult",
    "TrajectoryRecord",
    "TruncationPolicy",
    "assign_cones",
    "build_circuit",
    "build_heisenberg",
    "build_kicked_ising",
    "cone_width",
    "contract",
    "cross_expect",
    "entanglement_gap",
    "merge",
    "mirror_schedule",
    "neel_state",
    "parse_observable",
    "product_state",
    "random_mps",
    "run_sebd_trajectory",
    "run_tebd",
    "svd_truncate",
    "windowed_variance",
]
