"""Spin-1/2 operators and measurement bases.

Basis index 0 is spin up (sigma^z = +1). Spin operators are S = sigma / 2.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
SPIN = {k: v / 2 for k, v in PAULI.items()}

SQRT_HALF = np.sqrt(0.5)

# Rows are the two outcome vectors; outcome 0 is the +1/2 eigenvector.
MEASUREMENT_BASES = {
    "z": np.array([[1, 0], [0, 1]], dtype=np.complex128),
    "x": np.array([[1, 1], [1, -1]], dtype=np.complex128) * SQRT_HALF,
    "y": np.array([[1, 1j], [1, -1j]], dtype=np.complex128) * SQRT_HALF,
}

UP = np.array([1, 0], dtype=np.complex128)
DOWN = np.array([0, 1], dtype=np.complex128)


def spin(component: str) -> np.ndarray:
    """Return S^alpha for ``component`` in {"x", "y", "z"}."""
    try:
        return SPIN[component]
    except KeyError:
        raise ValueError(f"unknown spin component {component!r}") from None


def basis_vector(label) -> np.ndarray:
    """Single-site state from a label ("up"/"down"/"+"/"-") or an explicit 2-vector."""
    if isinstance(label, str):
        key = label.lower()
        if key in ("up", "u", "0"):
            return UP.copy()
        if key in ("down", "d", "1"):
            return DOWN.copy()
        if key == "+":
            return MEASUREMENT_BASES["x"][0].copy()
        if key == "-":
            return MEASUREMENT_BASES["x"][1].copy()
        raise ValueError(f"unknown basis label {label!r}")
    vec = np.asarray(label, dtype=np.complex128).reshape(2)
    return vec / np.linalg.norm(vec)


def heisenberg_bond() -> np.ndarray:
    """S^z S^z + (S^+ S^- + S^- S^+) / 2 on two sites, as a 4x4 matrix."""
    return sum(np.kron(SPIN[a], SPIN[a]) for a in "xyz").real.astype(np.complex128)


def embed(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix of a single-site operator; site 0 is the leftmost factor."""
    left = np.eye(2**site, dtype=np.complex128)
    right = np.eye(2 ** (n_sites - site - 1), dtype=np.complex128)
    return np.kron(np.kron(left, op), right)
