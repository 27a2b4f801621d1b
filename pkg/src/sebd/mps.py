"""Matrix product states for spin-1/2 chains.

Site tensors have index order (left bond, physical, right bond). The state
represented is ``exp(log_amplitude) * psi`` where ``psi`` is the contraction of
the site tensors. Whenever an orthogonality center is set, ``psi`` has unit
norm; every scalar dropped by truncation, projection or non-unitary operators
is moved into ``log_amplitude`` instead.

Sites and bonds are 0-based: bond ``b`` sits between sites ``b`` and ``b + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .operators import IDENTITY, basis_vector
from .tensor import (
    EXACT,
    ShapeError,
    TruncationPolicy,
    as_tensor,
    contract,
    is_hermitian,
    is_unitary,
    qr_positive,
    svd_truncate,
)

# Below this Born probability a branch is treated as impossible.
MIN_PROBABILITY = 1e-14

Chooser = Callable[[np.ndarray], int]


class ZeroProbabilityBranch(RuntimeError):
    """A projection landed on an outcome with (numerically) zero probability."""


@dataclass(frozen=True)
class TruncationReport:
    bond: int
    discarded_weight: float
    chi: int
    bound_by: str | None


@dataclass(frozen=True)
class EntanglementProfile:
    """Von Neumann entropies (natural log) and bond dimensions for bonds 0..N-2."""

    entropies: np.ndarray
    bond_dims: np.ndarray

    @property
    def peak_entropy(self) -> float:
        return float(np.max(self.entropies)) if self.entropies.size else 0.0

    @property
    def peak_chi(self) -> int:
        return int(np.max(self.bond_dims)) if self.bond_dims.size else 1


@dataclass(frozen=True)
class OneBodyRdm:
    """Single-site density matrix with eigenpairs sorted by descending eigenvalue.

    ``eigenvectors[k]`` is the k-th eigenvector. Ties keep a fixed order (see
    ``_sorted_eigh``), so sampling from it is reproducible.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def expect(self, op: np.ndarray) -> float:
        return float(np.trace(self.matrix @ op).real)


def entropy_from_singular_values(s: np.ndarray) -> float:
    w = np.asarray(s, dtype=float) ** 2
    total = w.sum()
    if total <= 0:
        return 0.0
    p = w[w > 0] / total
    return float(max(-np.sum(p * np.log(p)), 0.0))


def born_choice(probs: np.ndarray, r: float) -> int:
    """Pick k with sum(probs[:k]) < r <= sum(probs[:k+1]), skipping empty branches."""
    cumulative = np.cumsum(probs)
    k = int(np.searchsorted(cumulative, r, side="left"))
    k = min(k, len(probs) - 1)
    if probs[k] < MIN_PROBABILITY:
        allowed = np.nonzero(probs >= MIN_PROBABILITY)[0]
        k = int(allowed[np.argmin(np.abs(allowed - k))])
    return k


def rng_chooser(rng: np.random.Generator) -> Chooser:
    return lambda probs: born_choice(probs, rng.random())


def _canonical_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first non-negligible component is real positive."""
    idx = int(np.argmax(np.abs(vec) > 1e-12))
    return vec * (np.abs(vec[idx]) / vec[idx])


def _sorted_eigh(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(rho)
    vals = np.clip(vals.real, 0.0, None)
    vectors = [_canonical_phase(vecs[:, i]) for i in range(len(vals))]
    # descending eigenvalue; ties broken by (real, imag) components, lexicographically
    keys = [(-round(float(v), 12), *np.round(np.concatenate([x.real, x.imag]), 12)) for v, x in zip(vals, vectors)]
    order = sorted(range(len(vals)), key=lambda i: keys[i])
    vals = vals[order]
    total = vals.sum()
    return vals / total, np.array([vectors[i] for i in order])


class MpsState:
    """Open-boundary MPS with physical dimension 2 at every site."""

    def __init__(
        self,
        tensors: Sequence[np.ndarray],
        ortho_center: int | None = None,
        log_amplitude: complex = 0.0,
    ) -> None:
        self.tensors = [as_tensor(t) for t in tensors]
        self._validate()
        self.ortho_center = ortho_center
        self.log_amplitude = complex(log_amplitude)
        self.bond_singular_values: list[np.ndarray | None] = [None] * (len(self.tensors) - 1)

    def _validate(self) -> None:
        if not self.tensors:
            raise ShapeError("an MPS needs at least one site")
        for i, t in enumerate(self.tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ShapeError(f"site {i}: expected (left, 2, right), got {t.shape}")
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ShapeError("boundary bonds must have dimension 1")
        for i in range(len(self.tensors) - 1):
            if self.tensors[i].shape[2] != self.tensors[i + 1].shape[0]:
                raise ShapeError(f"bond {i}: dimensions {self.tensors[i].shape[2]} and {self.tensors[i + 1].shape[0]}")

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self) -> np.ndarray:
        return np.array([t.shape[2] for t in self.tensors[:-1]], dtype=int)

    @property
    def max_bond_dim(self) -> int:
        return int(self.bond_dims.max()) if self.n_sites > 1 else 1

    @property
    def is_zero(self) -> bool:
        return np.isneginf(self.log_amplitude.real)

    def copy(self) -> MpsState:
        new = MpsState.__new__(MpsState)
        new.tensors = [t.copy() for t in self.tensors]
        new.ortho_center = self.ortho_center
        new.log_amplitude = self.log_amplitude
        new.bond_singular_values = [None if s is None else s.copy() for s in self.bond_singular_values]
        return new

    def reversed(self) -> MpsState:
        """Mirror image: site i becomes site N-1-i."""
        new = MpsState([t.transpose(2, 1, 0).copy() for t in reversed(self.tensors)], log_amplitude=self.log_amplitude)
        if self.ortho_center is not None:
            new.ortho_center = self.n_sites - 1 - self.ortho_center
        new.bond_singular_values = [None if s is None else s.copy() for s in reversed(self.bond_singular_values)]
        return new

    def to_dense(self) -> np.ndarray:
        """Full state vector (including ``log_amplitude``); site 0 is the most significant qubit."""
        if self.n_sites > 20:
            raise ValueError("dense conversion is limited to 20 sites")
        vec = self.tensors[0]
        for t in self.tensors[1:]:
            vec = contract(vec, t, [(-1, 0)])
        return vec.reshape(-1) * np.exp(self.log_amplitude)

    @classmethod
    def from_dense(cls, vector: np.ndarray, policy: TruncationPolicy = EXACT) -> MpsState:
        vector = as_tensor(vector).reshape(-1)
        n = int(round(np.log2(vector.size)))
        if 2**n != vector.size:
            raise ShapeError("vector length must be a power of two")
        norm = np.linalg.norm(vector)
        rest = (vector / norm).reshape(1, -1)
        tensors = []
        for _ in range(n - 1):
            left = rest.shape[0]
            res = svd_truncate(rest.reshape(left * 2, -1), policy)
            tensors.append(res.left_isometry.reshape(left, 2, -1))
            rest = res.singular_values[:, None] * res.right_isometry
        tensors.append(rest.reshape(rest.shape[0], 2, 1))
        state = cls(tensors, ortho_center=n - 1, log_amplitude=np.log(norm))
        state._normalize_center()
        return state

    # -- gauge ---------------------------------------------------------------

    def _normalize_center(self) -> None:
        c = self.ortho_center
        nrm = np.linalg.norm(self.tensors[c])
        if nrm == 0:
            raise ZeroProbabilityBranch("state has zero norm")
        self.tensors[c] = self.tensors[c] / nrm
        self.log_amplitude += np.log(nrm)

    def _shift_right(self, i: int) -> None:
        t = self.tensors[i]
        q, r = qr_positive(t.reshape(t.shape[0] * 2, t.shape[2]))
        self.tensors[i] = q.reshape(t.shape[0], 2, -1)
        self.tensors[i + 1] = contract(r, self.tensors[i + 1], [(1, 0)])

    def _shift_left(self, i: int) -> None:
        t = self.tensors[i]
        q, r = qr_positive(t.reshape(t.shape[0], 2 * t.shape[2]).conj().T)
        self.tensors[i] = q.conj().T.reshape(-1, 2, t.shape[2])
        self.tensors[i - 1] = contract(self.tensors[i - 1], r.conj().T, [(2, 0)])

    def canonicalize(self, center: int = 0) -> None:
        """Bring the state into mixed canonical form around ``center`` from scratch."""
        for i in range(center):
            self._shift_right(i)
        for i in range(self.n_sites - 1, center, -1):
            self._shift_left(i)
        self.ortho_center = center
        self._normalize_center()

    def move_center(self, site: int) -> None:
        if not 0 <= site < self.n_sites:
            raise IndexError(f"site {site} outside chain of {self.n_sites}")
        if self.ortho_center is None:
            self.canonicalize(site)
            return
        while self.ortho_center < site:
            self._shift_right(self.ortho_center)
            self.ortho_center += 1
        while self.ortho_center > site:
            self._shift_left(self.ortho_center)
            self.ortho_center -= 1

    def norm(self) -> float:
        """Norm of the tensor contraction, excluding ``log_amplitude``."""
        if self.ortho_center is not None:
            return float(np.linalg.norm(self.tensors[self.ortho_center]))
        env = np.ones((1, 1), dtype=np.complex128)
        for t in self.tensors:
            env = np.einsum("ab,asc,bsd->cd", env, t.conj(), t, optimize=True)
        return float(np.sqrt(abs(env[0, 0])))

    # -- evolution -----------------------------------------------------------

    def apply_two_site_gate(
        self,
        bond: int,
        gate: np.ndarray,
        policy: TruncationPolicy = EXACT,
        *,
        center_to: str = "right",
        check: bool = True,
    ) -> TruncationReport:
        """Apply a 4x4 unitary on sites ``bond``, ``bond + 1`` and truncate.

        The gate acts on the basis index ``2 * s_left + s_right``. Afterwards the
        orthogonality center sits on the right (default) or left site, the
        tensors are renormalized and the kept norm is folded into
        ``log_amplitude``.
        """
        if not 0 <= bond < self.n_sites - 1:
            raise IndexError(f"bond {bond} outside chain of {self.n_sites}")
        gate = np.asarray(gate, dtype=np.complex128)
        if check and not is_unitary(gate):
            raise ValueError("gate is not unitary within 1e-10")
        if self.ortho_center not in (bond, bond + 1):
            self.move_center(bond if (self.ortho_center is None or self.ortho_center < bond) else bond + 1)
        a, b = self.tensors[bond], self.tensors[bond + 1]
        left, right = a.shape[0], b.shape[2]
        theta = contract(a, b, [(2, 0)])  # (l, s1, s2, r)
        theta = contract(gate.reshape(2, 2, 2, 2), theta, [(2, 1), (3, 2)])  # (s1', s2', l, r)
        theta = theta.transpose(2, 0, 1, 3).reshape(left * 2, 2 * right)
        res = svd_truncate(theta, policy)
        s = res.singular_values
        kept = np.linalg.norm(s)
        s = s / kept
        self.log_amplitude += np.log(kept)
        chi = len(s)
        if center_to == "right":
            self.tensors[bond] = res.left_isometry.reshape(left, 2, chi)
            self.tensors[bond + 1] = (s[:, None] * res.right_isometry).reshape(chi, 2, right)
            self.ortho_center = bond + 1
        else:
            self.tensors[bond] = (res.left_isometry * s[None, :]).reshape(left, 2, chi)
            self.tensors[bond + 1] = res.right_isometry.reshape(chi, 2, right)
            self.ortho_center = bond
        self.bond_singular_values[bond] = s
        return TruncationReport(bond, res.discarded_weight, chi, res.bound_by)

    def apply_single_site(self, site: int, op: np.ndarray) -> None:
        """Apply an arbitrary 2x2 operator; the norm change goes to ``log_amplitude``."""
        self.move_center(site)
        t = contract(np.asarray(op, dtype=np.complex128), self.tensors[site], [(1, 1)]).transpose(1, 0, 2)
        nrm = np.linalg.norm(t)
        if nrm < 1e-300:
            self.log_amplitude = complex(-np.inf, 0.0)
            return
        self.tensors[site] = t / nrm
        self.log_amplitude += np.log(nrm)

    # -- diagnostics ---------------------------------------------------------

    def schmidt_values(self, bond: int) -> np.ndarray:
        self.move_center(bond)
        t = self.tensors[bond]
        s = scipy.linalg.svdvals(t.reshape(t.shape[0] * 2, t.shape[2]), check_finite=False)
        self.bond_singular_values[bond] = s / np.linalg.norm(s)
        return self.bond_singular_values[bond]

    def entanglement_entropy(self, bond: int) -> float:
        """Von Neumann entropy (natural log) across ``bond``."""
        return entropy_from_singular_values(self.schmidt_values(bond))

    def entanglement_profile(self) -> EntanglementProfile:
        """Exact Schmidt spectrum on every bond via one left-to-right SVD sweep."""
        n = self.n_sites
        entropies = np.zeros(n - 1)
        dims = np.ones(n - 1, dtype=int)
        if n == 1:
            return EntanglementProfile(entropies, dims)
        self.move_center(0)
        for b in range(n - 1):
            t = self.tensors[b]
            left = t.shape[0]
            res = svd_truncate(t.reshape(left * 2, t.shape[2]), EXACT)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            chi = len(s)
            self.tensors[b] = res.left_isometry.reshape(left, 2, chi)
            self.tensors[b + 1] = contract(s[:, None] * res.right_isometry, self.tensors[b + 1], [(1, 0)])
            self.ortho_center = b + 1
            self.bond_singular_values[b] = s
            entropies[b] = entropy_from_singular_values(s)
            dims[b] = chi
        return EntanglementProfile(entropies, dims)

    # -- expectation values --------------------------------------------------

    def expect_local(self, site: int, op: np.ndarray) -> float:
        """<O_site> on the normalized state."""
        if not is_hermitian(op, 1e-10):
            raise ValueError("operator is not Hermitian")
        return self._expect_single(site, op).real

    def _expect_single(self, site: int, op: np.ndarray) -> complex:
        self.move_center(site)
        m = self.tensors[site]
        val = np.einsum("lsr,st,ltr->", m.conj(), op, m, optimize=True)
        return complex(val / np.vdot(m, m).real)

    def expect_two_site(self, site_a: int, op_a: np.ndarray, site_b: int, op_b: np.ndarray) -> float:
        """<O_a O_b> on the normalized state, ``site_a <= site_b``."""
        if site_a > site_b:
            raise ValueError("site_a must not exceed site_b")
        if not (is_hermitian(op_a, 1e-10) and is_hermitian(op_b, 1e-10)):
            raise ValueError("operator is not Hermitian")
        if site_a == site_b:
            return self._expect_single(site_a, np.asarray(op_a) @ np.asarray(op_b)).real
        self.move_center(site_a)
        a = self.tensors[site_a]
        norm2 = np.vdot(a, a).real
        env = np.einsum("lsr,st,ltq->rq", a.conj(), op_a, a, optimize=True)
        for i in range(site_a + 1, site_b):
            t = self.tensors[i]
            env = np.einsum("rq,rsx,qsy->xy", env, t.conj(), t, optimize=True)
        t = self.tensors[site_b]
        val = np.einsum("rq,rsx,st,qtx->", env, t.conj(), op_b, t, optimize=True)
        return float(val.real / norm2)

    def one_body_rdm(self, site: int) -> OneBodyRdm:
        self.move_center(site)
        m = self.tensors[site]
        rho = np.einsum("lsr,ltr->st", m, m.conj())
        rho = rho / np.trace(rho).real
        rho = 0.5 * (rho + rho.conj().T)
        vals, vecs = _sorted_eigh(rho)
        return OneBodyRdm(rho, vals, vecs)

    # -- measurement ---------------------------------------------------------

    def outcome_probabilities(self, site: int, basis: np.ndarray) -> np.ndarray:
        self.move_center(site)
        m = self.tensors[site]
        proj = np.einsum("ks,lsr->klr", np.asarray(basis).conj(), m)
        probs = np.sum(np.abs(proj) ** 2, axis=(1, 2)) / np.vdot(m, m).real
        return probs

    def project_site(self, site: int, outcome: np.ndarray, *, strict: bool = True) -> float:
        """Project ``site`` onto the single-site state ``outcome``.

        The measured site becomes the product factor ``outcome``; the tensors
        are renormalized and ``log(sqrt(p))`` is added to ``log_amplitude`` so
        the represented vector is the unnormalized projection.

        Returns:
            The Born probability ``p`` of the outcome on the normalized state.

        Raises:
            ZeroProbabilityBranch: If ``p`` is below ``MIN_PROBABILITY`` and
                ``strict`` is set. Without ``strict`` the state becomes the zero
                vector (``log_amplitude = -inf``) but keeps valid tensors.
        """
        v = np.asarray(outcome, dtype=np.complex128).reshape(2)
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("outcome vector must be normalized")
        self.move_center(site)
        m = self.tensors[site]
        norm2 = np.vdot(m, m).real
        proj = np.einsum("s,lsr->lr", v.conj(), m)
        p = float(np.vdot(proj, proj).real / norm2)
        if p < MIN_PROBABILITY:
            if strict:
                raise ZeroProbabilityBranch(f"outcome at site {site} has probability {p:.3e}")
            # keep a well-formed placeholder so later gates still apply
            proj = np.einsum("s,lsr->lr", np.array([v[1], -v[0]]), m)
            self.log_amplitude = complex(-np.inf, 0.0)
        else:
            self.log_amplitude += 0.5 * np.log(p)
        proj = proj / np.linalg.norm(proj)
        self.tensors[site] = proj[:, None, :] * v[None, :, None]
        self._compress_around(site)
        return p

    def _compress_around(self, site: int) -> None:
        """Drop numerically vanishing Schmidt values on both bonds of ``site``."""
        if site < self.n_sites - 1:
            self.move_center(site)
            t = self.tensors[site]
            res = svd_truncate(t.reshape(t.shape[0] * 2, t.shape[2]), EXACT)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            self.tensors[site] = res.left_isometry.reshape(t.shape[0], 2, -1)
            self.tensors[site + 1] = contract(s[:, None] * res.right_isometry, self.tensors[site + 1], [(1, 0)])
            self.ortho_center = site + 1
            self.bond_singular_values[site] = s
        if site > 0:
            self.move_center(site)
            t = self.tensors[site]
            res = svd_truncate(t.reshape(t.shape[0], 2 * t.shape[2]), EXACT)
            s = res.singular_values / np.linalg.norm(res.singular_values)
            self.tensors[site] = res.right_isometry.reshape(-1, 2, t.shape[2])
            self.tensors[site - 1] = contract(self.tensors[site - 1], res.left_isometry * s[None, :], [(2, 0)])
            self.ortho_center = site - 1
            self.bond_singular_values[site - 1] = s

    def sample_site(
        self,
        site: int,
        basis: np.ndarray,
        rng: np.random.Generator | None = None,
        *,
        chooser: Chooser | None = None,
    ) -> tuple[int, float]:
        """Born-sample one of the two orthonormal ``basis`` rows at ``site`` and project.

        Returns:
            ``(outcome index, probability)``.
        """
        basis = np.asarray(basis, dtype=np.complex128)
        if not is_unitary(basis.T, 1e-10):
            raise ValueError("measurement basis is not orthonormal")
        if chooser is None:
            if rng is None:
                raise ValueError("need an rng or a chooser")
            chooser = rng_chooser(rng)
        probs = self.outcome_probabilities(site, basis)
        k = chooser(probs)
        p = self.project_site(site, basis[k])
        return k, p

    def rdm_sample_site(
        self,
        site: int,
        rng: np.random.Generator | None = None,
        *,
        chooser: Chooser | None = None,
    ) -> tuple[int, float]:
        """Sample an eigenvector of the site's 1-RDM by its eigenvalue and project onto it."""
        basis = self.one_body_rdm(site).eigenvectors
        return self.sample_site(site, basis, rng, chooser=chooser)


def product_state(config: Sequence) -> MpsState:
    """Product state from per-site labels ("up"/"down") or explicit 2-vectors."""
    tensors = [basis_vector(label).reshape(1, 2, 1) for label in config]
    state = MpsState(tensors, ortho_center=0)
    state.bond_singular_values = [np.ones(1) for _ in range(len(tensors) - 1)]
    return state


def neel_state(n_sites: int) -> MpsState:
    return product_state(["up" if i % 2 == 0 else "down" for i in range(n_sites)])


def random_mps(n_sites: int, chi: int, seed: int) -> MpsState:
    """Normalized random MPS with bond ``b`` of dimension ``min(chi, 2**min(b+1, N-b-1))``."""
    if chi < 1:
        raise ValueError("chi must be positive")
    rng = np.random.default_rng(seed)
    dims = [1] + [min(chi, 2 ** min(b + 1, n_sites - b - 1)) for b in range(n_sites - 1)] + [1]
    tensors = []
    for i in range(n_sites):
        shape = (dims[i], 2, dims[i + 1])
        tensors.append(rng.normal(size=shape) + 1j * rng.normal(size=shape))
    state = MpsState(tensors)
    state.canonicalize(0)
    state.log_amplitude = 0.0j
    return state


def _raw_overlap(bra: MpsState, ket: MpsState, ops: dict[int, np.ndarray]) -> complex:
    env = np.ones((1, 1), dtype=np.complex128)
    for i, (b, k) in enumerate(zip(bra.tensors, ket.tensors)):
        op = ops.get(i)
        kk = k if op is None else contract(np.asarray(op, dtype=np.complex128), k, [(1, 1)]).transpose(1, 0, 2)
        env = np.einsum("ab,asc,bsd->cd", env, b.conj(), kk, optimize=True)
    return complex(env[0, 0])


def cross_expect(bra: MpsState, ket: MpsState, site: int, op: np.ndarray, *, include_amplitudes: bool = True) -> complex:
    """Bilinear form <bra| O_site |ket> including both ``log_amplitude`` factors."""
    if bra.n_sites != ket.n_sites:
        raise ShapeError(f"length mismatch: {bra.n_sites} vs {ket.n_sites}")
    raw = _raw_overlap(bra, ket, {site: op})
    if not include_amplitudes:
        return raw
    if bra.is_zero or ket.is_zero:
        return 0j
    return raw * np.exp(np.conj(bra.log_amplitude) + ket.log_amplitude)


def overlap(bra: MpsState, ket: MpsState) -> complex:
    return cross_expect(bra, ket, 0, IDENTITY)
