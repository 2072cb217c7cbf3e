"""Dense qudit-register algebra.

Index convention: site 0 is the most significant digit of the mixed-radix
basis index, i.e. the computational basis state ``|x_0 x_1 ... x_{n-1}>`` has
index ``sum_k x_k * prod(site_dims[k+1:])``.  This is the ordering produced by
``np.kron(A_0, A_1, ...)`` and it is used everywhere in the package.
"""
from __future__ import annotations

import itertools
import math
import uuid
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .settings import SETTINGS

__all__ = [
    "DimensionCapError",
    "RegisterShape",
    "HermitianOperator",
    "EigenSystem",
    "StateVector",
    "ClassicalMixture",
    "LocalTerm",
    "Projector",
    "embed",
    "embed_sparse",
    "apply_local",
    "spectral",
    "measure_in_basis",
    "partial_trace_to_support",
    "haar_in_range",
    "haar_vectors_in_range",
    "local_basis",
    "operator_basis",
    "sample_indices",
]


class DimensionCapError(ValueError):
    """Raised when a register exceeds the configured dimension cap."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind not in "fc":
        a = a.astype(float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def _max_antihermitian(a: np.ndarray, block: int = 1024) -> float:
    """max |A - A^dagger| computed in row blocks to bound temporaries."""
    worst = 0.0
    for start in range(0, a.shape[0], block):
        rows = a[start:start + block]
        cols = a[:, start:start + block].conj().T
        worst = max(worst, float(np.max(np.abs(rows - cols), initial=0.0)))
    return worst


@dataclass(frozen=True)
class RegisterShape:
    """Local dimensions of a qudit register."""

    site_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.site_dims)
        object.__setattr__(self, "site_dims", dims)
        if any(d < 2 for d in dims):
            raise ValueError(f"every site dimension must be >= 2, got {dims}")
        if self.total_dim > SETTINGS.max_dim:
            raise DimensionCapError(
                f"register dimension {self.total_dim} exceeds cap {SETTINGS.max_dim}"
            )

    @classmethod
    def qubits(cls, n: int) -> "RegisterShape":
        return cls((2,) * n)

    @classmethod
    def uniform(cls, n: int, d: int) -> "RegisterShape":
        return cls((d,) * n)

    @property
    def n_sites(self) -> int:
        return len(self.site_dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.site_dims)

    def support_dim(self, support: Sequence[int]) -> int:
        return math.prod(self.site_dims[s] for s in support)

    def check_support(self, support: Sequence[int]) -> tuple[int, ...]:
        support = tuple(int(s) for s in support)
        if len(set(support)) != len(support):
            raise ValueError(f"support has repeated sites: {support}")
        for s in support:
            if not 0 <= s < self.n_sites:
                raise IndexError(f"site {s} out of range for {self.n_sites} sites")
        return support


@dataclass(frozen=True, eq=False)
class HermitianOperator:
    """Dense Hermitian matrix on a register.

    Real symmetric input is kept real; this halves memory and lets
    :func:`spectral` use the faster real eigensolver.
    """

    shape: RegisterShape
    entries: np.ndarray

    def __post_init__(self):
        a = _as_matrix(self.entries, "entries")
        if a.shape[0] != self.shape.total_dim:
            raise ValueError(f"matrix side {a.shape[0]} != register dim {self.shape.total_dim}")
        if a.dtype.kind == "c" and not np.any(a.imag):
            a = np.ascontiguousarray(a.real)
        if _max_antihermitian(a) > SETTINGS.hermitian_tol:
            raise ValueError("operator is not Hermitian within tolerance")
        object.__setattr__(self, "entries", _freeze(a))

    @property
    def dim(self) -> int:
        return self.shape.total_dim

    def expectation(self, psi: np.ndarray) -> float:
        return float(np.real(np.vdot(psi, self.entries @ psi)))

    def __add__(self, other: "HermitianOperator") -> "HermitianOperator":
        if other.shape != self.shape:
            raise ValueError("register shapes differ")
        return HermitianOperator(self.shape, self.entries + other.entries)


@dataclass(frozen=True, eq=False)
class StateVector:
    shape: RegisterShape
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.size != self.shape.total_dim:
            raise ValueError(f"state has {a.size} amplitudes, register needs {self.shape.total_dim}")
        if abs(np.vdot(a, a).real - 1.0) > SETTINGS.norm_tol:
            raise ValueError("state is not normalised")
        object.__setattr__(self, "amplitudes", _freeze(a))

    @classmethod
    def normalized(cls, shape: RegisterShape, amplitudes) -> "StateVector":
        a = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(shape, a / np.linalg.norm(a))

    @classmethod
    def basis(cls, shape: RegisterShape, index: int) -> "StateVector":
        a = np.zeros(shape.total_dim, dtype=complex)
        a[index] = 1.0
        return cls(shape, a)

    @classmethod
    def uniform_product(cls, shape: RegisterShape) -> "StateVector":
        """Equal superposition on every site, e.g. ``|+>^n`` for qubits."""
        return cls(shape, np.full(shape.total_dim, 1 / math.sqrt(shape.total_dim), dtype=complex))

    @classmethod
    def haar(cls, shape: RegisterShape, rng: np.random.Generator) -> "StateVector":
        z = rng.normal(size=shape.total_dim) + 1j * rng.normal(size=shape.total_dim)
        return cls.normalized(shape, z)

    @property
    def dim(self) -> int:
        return self.shape.total_dim

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Spectral decomposition with energies in non-decreasing order.

    ``basis`` holds eigenvectors as columns.  For diagonal operators the
    dense basis is never formed: ``basis`` is ``None`` and ``labels[a]`` is the
    computational index of the ``a``-th eigenvector.
    """

    energies: np.ndarray
    basis: np.ndarray | None = None
    labels: np.ndarray | None = None
    shape: RegisterShape | None = None
    key: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).reshape(-1)
        if np.any(np.diff(e) < 0):
            raise ValueError("energies must be sorted non-decreasing")
        object.__setattr__(self, "energies", _freeze(e))
        if (self.basis is None) == (self.labels is None):
            raise ValueError("give exactly one of a dense basis or computational labels")
        if self.basis is not None:
            b = np.asarray(self.basis)
            if b.shape != (e.size, e.size):
                raise ValueError("basis shape does not match energies")
            object.__setattr__(self, "basis", _freeze(b))
        else:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != e.shape or not np.array_equal(np.sort(lab), np.arange(e.size)):
                raise ValueError("labels must be a permutation of range(dim)")
            object.__setattr__(self, "labels", _freeze(lab))

    @classmethod
    def from_diagonal(cls, diagonal, shape: RegisterShape | None = None) -> "EigenSystem":
        d = np.asarray(diagonal, dtype=float)
        order = np.argsort(d, kind="stable")
        return cls(d[order], labels=order, shape=shape)

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def is_computational(self) -> bool:
        return self.basis is None

    @cached_property
    def positions(self) -> np.ndarray:
        """Inverse of ``labels``: eigen-index of each computational state."""
        inv = np.empty_like(self.labels)
        inv[self.labels] = np.arange(self.dim)
        return inv

    def dense_basis(self) -> np.ndarray:
        if self.basis is not None:
            return self.basis
        b = np.zeros((self.dim, self.dim))
        b[self.labels, np.arange(self.dim)] = 1.0
        return b

    def columns(self, idx) -> np.ndarray:
        """Eigenvectors ``idx`` as columns of a dense array."""
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if self.basis is not None:
            return self.basis[:, idx]
        out = np.zeros((self.dim, idx.size))
        out[self.labels[idx], np.arange(idx.size)] = 1.0
        return out

    def vector(self, index: int) -> StateVector:
        if self.shape is None:
            raise ValueError("eigensystem carries no register shape")
        return StateVector(self.shape, self.columns(index)[:, 0])

    def coefficients(self, vecs: np.ndarray) -> np.ndarray:
        """Overlaps <xi_a|v> for a vector or the columns of a matrix."""
        vecs = np.asarray(vecs)
        if self.basis is not None:
            return self.basis.conj().T @ vecs
        return vecs[self.labels]

    def probabilities(self, state: StateVector | np.ndarray) -> np.ndarray:
        psi = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
        return np.abs(self.coefficients(psi)) ** 2

    def transition(self, weights: np.ndarray, new: "EigenSystem") -> np.ndarray:
        """Outcome distribution in ``new`` for the mixture ``sum_a w_a |xi_a><xi_a|``.

        Returns ``p_b = sum_a w_a |<xi'_b|xi_a>|^2``.  Weights smaller than the
        ``mixture_prune`` setting (in total) are skipped.
        """
        w = np.asarray(weights, dtype=float)
        if w.size != self.dim or new.dim != self.dim:
            raise ValueError("dimension mismatch between mixture and eigensystems")
        keep = _significant(w, SETTINGS.mixture_prune)
        wk = w[keep]
        if self.is_computational and new.is_computational:
            p = np.zeros(self.dim)
            np.add.at(p, new.positions[self.labels[keep]], wk)
        elif self.is_computational:
            p = (np.abs(new.basis[self.labels[keep], :]) ** 2).T @ wk
        elif new.is_computational:
            p = (np.abs(self.basis[new.labels][:, keep]) ** 2) @ wk
        else:
            ov = new.basis.conj().T @ self.basis[:, keep]
            p = (ov.real ** 2 + ov.imag ** 2) @ wk
        total = p.sum()
        return p / total if total > 0 else p

    def diagonal_expectations(self, op) -> np.ndarray:
        """<xi_a|op|xi_a> for every eigenvector; ``op`` dense, sparse or callable."""
        if self.is_computational:
            if callable(op) and not hasattr(op, "shape"):
                raise TypeError("callable operators need a dense eigenbasis")
            d = op.diagonal() if hasattr(op, "diagonal") else np.diag(op)
            return np.real(np.asarray(d))[self.labels]
        v = self.basis
        hv = op(v) if callable(op) and not hasattr(op, "shape") else op @ v
        return np.real(np.einsum("ij,ij->j", v.conj(), hv))


def _significant(w: np.ndarray, prune: float) -> np.ndarray:
    """Indices carrying all but at most ``prune`` of the total weight."""
    order = np.argsort(w)
    csum = np.cumsum(w[order])
    n_drop = int(np.searchsorted(csum, prune, side="right"))
    keep = np.sort(order[n_drop:])
    return keep


@dataclass(frozen=True, eq=False)
class ClassicalMixture:
    """Probability vector over the eigenvectors of the eigensystem ``basis_ref``."""

    basis_ref: str
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if np.any(w < -SETTINGS.norm_tol):
            raise ValueError("mixture weights must be non-negative")
        if abs(w.sum() - 1.0) > SETTINGS.norm_tol:
            raise ValueError(f"mixture weights sum to {w.sum()}, expected 1")
        object.__setattr__(self, "weights", _freeze(np.clip(w, 0.0, None)))

    @classmethod
    def of(cls, es: EigenSystem, weights) -> "ClassicalMixture":
        return cls(es.key, weights)


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """A Hermitian matrix acting on the sites listed in ``support``."""

    support: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(s) for s in self.support))
        m = _as_matrix(self.matrix, "matrix")
        if m.dtype.kind == "c" and not np.any(m.imag):
            m = m.real.copy()
        if np.max(np.abs(m - m.conj().T), initial=0.0) > SETTINGS.hermitian_tol:
            raise ValueError("local term is not Hermitian")
        object.__setattr__(self, "matrix", _freeze(m))


@dataclass(frozen=True, eq=False)
class Projector(LocalTerm):
    """Orthogonal projector on a support subsystem; ``rank`` is its trace."""

    rank: int = -1

    def __post_init__(self):
        super().__post_init__()
        m = self.matrix
        if np.max(np.abs(m @ m - m), initial=0.0) > SETTINGS.projector_tol:
            raise ValueError("matrix is not idempotent")
        tr = float(np.trace(m).real)
        rank = int(round(tr)) if self.rank < 0 else int(self.rank)
        if abs(tr - rank) > SETTINGS.trace_tol:
            raise ValueError(f"projector trace {tr} does not match rank {rank}")
        object.__setattr__(self, "rank", rank)

    @classmethod
    def from_vectors(cls, support: Sequence[int], vectors) -> "Projector":
        """Projector onto the span of orthonormal ``vectors`` (rows)."""
        v = np.atleast_2d(np.asarray(vectors))
        m = v.T @ v.conj()
        return cls(tuple(support), m, rank=v.shape[0])

    @cached_property
    def range_basis(self) -> np.ndarray:
        """Orthonormal columns spanning the range."""
        w, u = np.linalg.eigh(self.matrix)
        return np.ascontiguousarray(u[:, w > 0.5])


def _perm_axes(shape: RegisterShape, support: tuple[int, ...]) -> list[int]:
    rest = [s for s in range(shape.n_sites) if s not in support]
    return list(support) + rest


def apply_local(matrix: np.ndarray, support: Sequence[int], shape: RegisterShape,
                vecs: np.ndarray) -> np.ndarray:
    """Apply a support-local matrix to vectors without forming the full operator.

    ``vecs`` has shape ``(dim,)`` or ``(dim, *extra)``; extra axes are carried.
    """
    support = tuple(support)
    k = len(support)
    vecs = np.asarray(vecs)
    extra = vecs.shape[1:]
    sdims = [shape.site_dims[s] for s in support]
    t = vecs.reshape(shape.site_dims + extra)
    op = np.asarray(matrix).reshape(sdims + sdims)
    out = np.tensordot(op, t, axes=(list(range(k, 2 * k)), list(support)))
    out = np.moveaxis(out, list(range(k)), list(support))
    return out.reshape(vecs.shape)


def _embedding_indices(shape: RegisterShape, support: tuple[int, ...]):
    """Map (support index, rest index) pairs to full-register indices."""
    axes = _perm_axes(shape, support)
    dims = shape.site_dims
    idx = np.arange(shape.total_dim).reshape(dims)
    idx = np.transpose(idx, axes)
    sdim = shape.support_dim(support)
    return idx.reshape(sdim, -1)


def embed_sparse(matrix: np.ndarray, support: Sequence[int], shape: RegisterShape) -> sp.csr_matrix:
    """Sparse full-register matrix acting as ``matrix`` on ``support``."""
    support = shape.check_support(support)
    m = np.asarray(matrix)
    if m.shape[0] != shape.support_dim(support):
        raise ValueError(
            f"term side {m.shape[0]} does not match support dimension {shape.support_dim(support)}"
        )
    full_idx = _embedding_indices(shape, support)  # (sdim, rest)
    a, b = np.nonzero(m)
    vals = m[a, b]
    rows = full_idx[a, :].reshape(-1)
    cols = full_idx[b, :].reshape(-1)
    data = np.repeat(vals, full_idx.shape[1])
    dim = shape.total_dim
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def embed(term: LocalTerm, shape: RegisterShape) -> HermitianOperator:
    """Dense operator acting as ``term`` on its support and identity elsewhere."""
    return HermitianOperator(shape, embed_sparse(term.matrix, term.support, shape).toarray())


def spectral(op: HermitianOperator) -> EigenSystem:
    """Full eigendecomposition, energies ascending.

    Real symmetric matrices use the divide-and-conquer driver; complex
    Hermitian matrices use the MRRR driver, which is several times faster
    for complex input on a single core.
    """
    a = op.entries
    if a.dtype.kind == "f":
        w, v = scipy.linalg.eigh(a, driver="evd", check_finite=False)
    else:
        w, v = scipy.linalg.eigh(a, driver="evr", check_finite=False)
    return EigenSystem(w, basis=v, shape=op.shape)


def sample_indices(p: np.ndarray, rng: np.random.Generator, size=None) -> np.ndarray | int:
    """Draw indices from the (unnormalised, non-negative) weights ``p``."""
    c = np.cumsum(p)
    u = rng.random(size) * c[-1]
    out = np.searchsorted(c, u, side="right")
    out = np.minimum(out, len(p) - 1)
    return int(out) if size is None else out


def measure_in_basis(state: StateVector, es: EigenSystem, rng: np.random.Generator) -> tuple[int, float]:
    """Projective measurement of ``state`` in the eigenbasis of ``es``."""
    if state.dim != es.dim:
        raise ValueError("state and eigensystem dimensions differ")
    idx = sample_indices(es.probabilities(state), rng)
    return idx, float(es.energies[idx])


def partial_trace_to_support(state: StateVector | np.ndarray, support: Sequence[int],
                             shape: RegisterShape | None = None) -> np.ndarray:
    """Reduced density matrix on ``support`` (ordered as given).

    ``state`` is a :class:`StateVector` or a density matrix; for the latter
    ``shape`` is required.
    """
    if isinstance(state, StateVector):
        shape = state.shape
        support = shape.check_support(support)
        t = state.amplitudes.reshape(shape.site_dims)
        m = np.transpose(t, _perm_axes(shape, support)).reshape(shape.support_dim(support), -1)
        return m @ m.conj().T
    if shape is None:
        raise ValueError("shape is required for density-matrix input")
    support = shape.check_support(support)
    rho = np.asarray(state)
    n = shape.n_sites
    axes = _perm_axes(shape, support)
    t = rho.reshape(shape.site_dims * 2)
    t = np.transpose(t, axes + [a + n for a in axes])
    s = shape.support_dim(support)
    r = shape.total_dim // s
    return np.einsum("arbr->ab", t.reshape(s, r, s, r))


def haar_vectors_in_range(proj: Projector, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent Haar-random unit vectors in range(proj), as rows."""
    u = proj.range_basis
    d = u.shape[1]
    if d == 0:
        raise ValueError("projector has rank 0")
    z = rng.normal(size=(size, d)) + 1j * rng.normal(size=(size, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z @ u.T


def haar_in_range(proj: Projector, rng: np.random.Generator) -> Projector:
    """Rank-1 projector onto a Haar-random unit vector inside range(proj)."""
    if proj.rank < 1:
        raise ValueError("projector has rank 0")
    v = haar_vectors_in_range(proj, rng, 1)[0]
    return Projector(proj.support, np.outer(v, v.conj()), rank=1)


_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def local_basis(d: int) -> list[tuple[str, np.ndarray]]:
    """Trace-orthogonal Hermitian basis of one d-level site, identity first.

    Qubits get the Pauli matrices.  Other dimensions get the generalised
    Gell-Mann matrices; the diagonal ones are rescaled to operator norm 1.
    """
    if d == 2:
        return [(k, v) for k, v in _PAULI.items()]
    out = [("I", np.eye(d, dtype=complex))]
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j, 1j
            out.append((f"S{j}{k}", s))
            out.append((f"A{j}{k}", a))
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1
        diag[l] = -l
        out.append((f"D{l}", np.diag(diag / np.max(np.abs(diag))).astype(complex)))
    return out


def operator_basis(support_dims: Sequence[int]) -> list[HermitianOperator]:
    """Tensor-product operator basis of a support space (identity first)."""
    shape = RegisterShape(tuple(support_dims))
    singles = [local_basis(d) for d in shape.site_dims]
    ops = []
    for combo in itertools.product(*singles):
        m = combo[0][1]
        for _, b in combo[1:]:
            m = np.kron(m, b)
        ops.append(HermitianOperator(shape, m))
    return ops
