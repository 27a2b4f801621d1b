"""Dense complex tensor kernels.

All tensors are plain ``numpy`` arrays of dtype ``complex128`` in C (row-major)
order. ``contract`` keeps the free indices of ``a`` first, then those of ``b``,
each in their original order. Every higher module relies on that convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

# Singular values below this fraction of the largest one are exact zeros up to
# roundoff; they are always discarded (relative weight < 1e-28).
NUMERICAL_ZERO = 1e-14


class ShapeError(ValueError):
    """Raised when tensor dimensions are incompatible with an operation."""


@dataclass(frozen=True)
class TruncationPolicy:
    """Relative discarded-weight threshold ``epsilon`` and rank cap ``chi_max``.

    ``chi_max=None`` means unbounded.
    """

    epsilon: float = 0.0
    chi_max: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.chi_max is not None and self.chi_max < 1:
            raise ValueError(f"chi_max must be positive, got {self.chi_max}")


EXACT = TruncationPolicy()


@dataclass(frozen=True)
class SvdResult:
    left_isometry: np.ndarray
    singular_values: np.ndarray
    right_isometry: np.ndarray
    discarded_weight: float
    # "epsilon", "chi_max" or None when nothing but numerical zeros was dropped
    bound_by: str | None = None

    @property
    def rank(self) -> int:
        return len(self.singular_values)


def as_tensor(data) -> np.ndarray:
    """Convert to a finite complex128 array."""
    arr = np.asarray(data, dtype=np.complex128)
    if not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def contract(a: np.ndarray, b: np.ndarray, paired_axes: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired indices of ``a`` and ``b``.

    Args:
        a: First tensor.
        b: Second tensor.
        paired_axes: ``(axis_of_a, axis_of_b)`` pairs to contract.

    Returns:
        Tensor whose indices are the free indices of ``a`` followed by the free
        indices of ``b``.

    Raises:
        ShapeError: If a paired dimension differs or an axis repeats.
    """
    axes_a = [p[0] % a.ndim for p in paired_axes]
    axes_b = [p[1] % b.ndim for p in paired_axes]
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ShapeError("an axis appears in more than one pair")
    for i, j in zip(axes_a, axes_b):
        if a.shape[i] != b.shape[j]:
            raise ShapeError(f"cannot pair axis {i} (dim {a.shape[i]}) with axis {j} (dim {b.shape[j]})")
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _svd(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def kept_rank(s: np.ndarray, policy: TruncationPolicy) -> tuple[int, str | None]:
    """Smallest rank meeting the discarded-weight rule, then capped at ``chi_max``."""
    if s.size == 0 or s[0] == 0.0:
        return (1 if s.size else 0), None
    numeric = int(np.count_nonzero(s > NUMERICAL_ZERO * s[0]))
    w = s[:numeric] ** 2
    total = float(np.sum(s**2))
    # tail[r] = weight discarded when keeping r values
    tail = np.concatenate((np.cumsum(w[::-1])[::-1], [0.0])) + (total - float(np.sum(w)))
    rank = numeric
    bound_by = None
    if policy.epsilon > 0.0:
        ok = np.nonzero(tail / total <= policy.epsilon)[0]
        r_eps = max(int(ok[0]), 1) if ok.size else numeric
        if r_eps < rank:
            rank, bound_by = r_eps, "epsilon"
    if policy.chi_max is not None and rank > policy.chi_max:
        rank, bound_by = policy.chi_max, "chi_max"
    return rank, bound_by


def svd_truncate(m: np.ndarray, policy: TruncationPolicy = EXACT) -> SvdResult:
    """Truncated singular value decomposition of a matrix.

    The kept rank is the smallest ``r`` whose relative discarded squared weight
    is at most ``policy.epsilon``, capped at ``policy.chi_max``. Values below
    ``NUMERICAL_ZERO`` relative to the largest are always dropped. Nothing is
    renormalized here.
    """
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {m.shape}")
    if m.size == 0:
        raise ShapeError("cannot decompose an empty matrix")
    u, s, vh = _svd(m)
    total = float(np.sum(s**2))
    rank, bound_by = kept_rank(s, policy)
    discarded = float(np.sum(s[rank:] ** 2)) / total if total > 0 else 0.0
    return SvdResult(
        left_isometry=u[:, :rank],
        singular_values=s[:rank],
        right_isometry=vh[:rank, :],
        discarded_weight=discarded,
        bound_by=bound_by,
    )


def qr_positive(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a real non-negative diagonal in ``R``.

    Fixing the phases makes repeated canonicalization a no-op.
    """
    q, r = np.linalg.qr(m)
    d = np.diagonal(r).copy()
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1.0), 1.0)
    q = q * phase[None, :]
    r = r * np.conj(phase)[:, None]
    return q, r


def is_unitary(u: np.ndarray, tol: float = 1e-10) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))) <= tol


def is_hermitian(op: np.ndarray, tol: float = 1e-12) -> bool:
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and float(np.max(np.abs(op - op.conj().T))) <= tol
