"""Samplers for the two altered-Hamiltonian families.

Local family: ``H_phi = sum_i (Pi_i + phi_i)`` where each ``phi_i`` is a
Haar-random rank-1 projector inside range(Pi_i).

Sparse family: ``H_{T,f} = H + W^dagger W`` with ``W = sum T_ab f_ab |a><b|``
written in the eigenbasis of ``H``.  ``T`` is a 0/1 pattern and ``f_ab`` is a
real gaussian with variance ``E_b / t_b``, where ``t_b`` counts the nonzero
entries of column ``b`` of ``T``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .models import DiagonalLandscape, LocalHamiltonian
from .qop import (
    EigenSystem,
    HermitianOperator,
    LocalTerm,
    Projector,
    embed_sparse,
    haar_in_range,
)
from .settings import SETTINGS

__all__ = [
    "LocalAlteration",
    "SparsityPattern",
    "SparseAlteration",
    "sample_local_alteration",
    "altered_hamiltonian",
    "assemble_altered",
    "pattern_columns",
    "pattern_coordinates",
    "sample_sparse_alteration",
    "sparse_altered_matrix",
    "assemble_sparse_altered",
    "write_alteration_csv",
]


# -- local family ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LocalAlteration:
    phis: tuple[Projector, ...]

    def __post_init__(self):
        object.__setattr__(self, "phis", tuple(self.phis))
        for phi in self.phis:
            if phi.rank != 1:
                raise ValueError("alteration states must be rank-1 projectors")

    def check_inside(self, h: LocalHamiltonian) -> None:
        """Raise unless every phi_i lies inside range(Pi_i)."""
        if len(self.phis) != h.m:
            raise ValueError(f"alteration has {len(self.phis)} states, Hamiltonian has {h.m} terms")
        for pi, phi in zip(h.terms, self.phis):
            if pi.support != phi.support:
                raise ValueError("alteration support differs from term support")
            err = max(np.max(np.abs(pi.matrix @ phi.matrix - phi.matrix)),
                      np.max(np.abs(phi.matrix @ pi.matrix - phi.matrix)))
            if err > SETTINGS.projector_tol:
                raise ValueError(f"phi on {phi.support} leaves range(Pi) by {err:.2e}")


def sample_local_alteration(h: LocalHamiltonian, rng: np.random.Generator) -> LocalAlteration:
    """Independent Haar-random phi_i inside every term's range."""
    if not h.is_projector_sum:
        raise ValueError("the local family needs projector terms")
    return LocalAlteration(tuple(haar_in_range(t, rng) for t in h.terms))


def altered_hamiltonian(h: LocalHamiltonian, a: LocalAlteration) -> LocalHamiltonian:
    """H_phi as a local Hamiltonian with terms Pi_i + phi_i."""
    if len(a.phis) != h.m:
        raise ValueError(f"alteration has {len(a.phis)} states, Hamiltonian has {h.m} terms")
    terms = []
    for pi, phi in zip(h.terms, a.phis):
        if pi.support != phi.support:
            raise ValueError("alteration support differs from term support")
        terms.append(LocalTerm(pi.support, pi.matrix + phi.matrix))
    return LocalHamiltonian(h.shape, tuple(terms), h.label + "-altered")


def assemble_altered(h: LocalHamiltonian, a: LocalAlteration) -> HermitianOperator:
    """Dense H_phi = sum_i embed(Pi_i + phi_i)."""
    return altered_hamiltonian(h, a).to_dense()


# -- sparse family --------------------------------------------------------------

@dataclass(frozen=True)
class SparsityPattern:
    """Pattern T over basis labels.

    ``band``: T_ab = 1 when |a - b| <= t (diagonal included).
    ``hamming``: T_ab = 1 when a and b differ in exactly one bit.
    ``dim`` defaults to 2**n_bits; the band pattern also accepts other sizes.
    """

    kind: str
    n_bits: int
    t: int = 1
    dim: int | None = None

    def __post_init__(self):
        if self.kind not in ("band", "hamming"):
            raise ValueError(f"unknown pattern kind {self.kind!r}")
        if self.kind == "band" and self.t < 1:
            raise ValueError("band half-width t must be >= 1")
        size = 2 ** self.n_bits if self.dim is None else int(self.dim)
        if self.kind == "hamming" and size != 2 ** self.n_bits:
            raise ValueError("hamming pattern needs dim = 2**n_bits")
        object.__setattr__(self, "dim", size)


def pattern_columns(pattern: SparsityPattern, beta: int) -> list[int]:
    """Rows a with T_{a, beta} = 1, ascending."""
    if not 0 <= beta < pattern.dim:
        raise IndexError(f"beta={beta} out of range")
    if pattern.kind == "band":
        return list(range(max(0, beta - pattern.t), min(pattern.dim, beta + pattern.t + 1)))
    return sorted(beta ^ (1 << k) for k in range(pattern.n_bits))


@lru_cache(maxsize=16)
def pattern_coordinates(pattern: SparsityPattern) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All (alpha, beta) with T=1, sorted by beta then alpha, plus t_beta."""
    dim = pattern.dim
    beta = np.arange(dim)
    if pattern.kind == "band":
        off = np.arange(-pattern.t, pattern.t + 1)
        alpha = beta[:, None] + off[None, :]
        valid = (alpha >= 0) & (alpha < dim)
        bb = np.broadcast_to(beta[:, None], alpha.shape)
        a, b = alpha[valid], bb[valid]
    else:
        flips = 1 << np.arange(pattern.n_bits)
        alpha = np.sort(beta[:, None] ^ flips[None, :], axis=1)
        a = alpha.reshape(-1)
        b = np.repeat(beta, pattern.n_bits)
    t_col = np.bincount(b, minlength=dim)
    for arr in (a, b, t_col):
        arr.setflags(write=False)
    return a, b, t_col


@dataclass(frozen=True, eq=False)
class SparseAlteration:
    """Sampled W.  ``f[a, b]`` is the coefficient of |xi_a><xi_b|.

    Labels are computational indices for a landscape base and eigen-indices
    (sorted energy order) for an :class:`EigenSystem` base.
    """

    pattern: SparsityPattern
    f: sp.csr_matrix
    t_col: np.ndarray

    def w_dagger_w(self) -> sp.csr_matrix:
        return (self.f.T @ self.f).tocsr()


def _base_energies(base) -> np.ndarray:
    if isinstance(base, DiagonalLandscape):
        return base.energies
    if isinstance(base, EigenSystem):
        e = np.array(base.energies)
        if np.any(e < -SETTINGS.psd_tol):
            raise ValueError("sparse alteration needs non-negative energies; shift the ground energy to 0")
        # numerically-zero eigenvalues are treated as exact zeros
        e[np.abs(e) <= SETTINGS.psd_tol] = 0.0
        return e
    raise TypeError(f"unsupported base {type(base).__name__}")


def sample_sparse_alteration(base: EigenSystem | DiagonalLandscape, pattern: SparsityPattern,
                             rng: np.random.Generator) -> SparseAlteration:
    """Gaussian f with E[f_ab^2] = E_b / t_b on the pattern."""
    e = _base_energies(base)
    if np.any(e < 0):
        raise ValueError("sparse alteration needs non-negative energies")
    if e.size != pattern.dim:
        raise ValueError(f"pattern dim {pattern.dim} != base dim {e.size}")
    a, b, t_col = pattern_coordinates(pattern)
    scale = np.sqrt(e / t_col)
    vals = rng.normal(size=a.size) * scale[b]
    f = sp.csr_matrix((vals, (a, b)), shape=(pattern.dim, pattern.dim))
    return SparseAlteration(pattern, f, t_col)


def sparse_altered_matrix(base: EigenSystem | DiagonalLandscape, s: SparseAlteration) -> sp.csr_matrix:
    """diag(E) + W^dagger W in the label basis (sparse)."""
    e = _base_energies(base)
    if e.size != s.pattern.dim:
        raise ValueError("dimension mismatch between base and alteration")
    return (sp.diags(e) + s.w_dagger_w()).tocsr()


def assemble_sparse_altered(base: EigenSystem | DiagonalLandscape, s: SparseAlteration) -> HermitianOperator:
    """Dense H_{T,f} in the computational basis of the register.

    For a landscape the label basis is already the computational basis.  For
    an eigensystem the label-basis matrix is rotated back by the eigenvectors.
    """
    m = sparse_altered_matrix(base, s).toarray()
    if isinstance(base, DiagonalLandscape):
        return HermitianOperator(base.shape, m)
    if base.shape is None:
        raise ValueError("eigensystem needs a register shape to assemble an operator")
    v = base.dense_basis()
    full = v @ m @ v.conj().T
    return HermitianOperator(base.shape, (full + full.conj().T) / 2)


def write_alteration_csv(s: SparseAlteration, path) -> None:
    coo = s.f.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "value"])
        for k in order:
            w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])
