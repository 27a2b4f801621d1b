from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sebd.mps import MpsState

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def bell_state() -> MpsState:
    """(|up up> + |down down>) / sqrt(2) as a two-site MPS."""
    return MpsState.from_dense(np.array([1, 0, 0, 1]) / np.sqrt(2))


def global_phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - e^{i phi} b| with the best phase phi."""
    ov = np.vdot(b, a)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.max(np.abs(a - phase * b)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
