"""Energy-lowering primitives: best-of-K energy measurement and the variational update."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from .models import LocalHamiltonian
from .qop import (
    ClassicalMixture,
    EigenSystem,
    HermitianOperator,
    RegisterShape,
    StateVector,
    embed_sparse,
    local_basis,
    sample_indices,
)
from .settings import SETTINGS
from .stats import energy_levels

__all__ = [
    "MeasurementOutcome",
    "BasisTerm",
    "VariationalStep",
    "energy_measurement_step",
    "select_min",
    "min_of_k",
    "energy_measurement_distribution",
    "local_operator_basis",
    "variational_gradient",
    "local_variance",
    "default_theta_grid",
    "variational_update",
]


# -- best of K measurement ---------------------------------------------------------

@dataclass(frozen=True)
class MeasurementOutcome:
    chosen_index: int
    chosen_energy: float
    all_energies: tuple[float, ...]
    measurement_count: int


def select_min(draws: np.ndarray, level_of: np.ndarray, tie_break: str = "index") -> np.ndarray:
    """Winner of each row of ``draws`` (eigen-indices, shape (..., K)).

    ``index``: the lowest eigen-index among the lowest-energy outcomes.
    ``copy``: the first copy (in draw order) among the lowest-energy outcomes.
    """
    draws = np.asarray(draws)
    if tie_break == "index":
        return draws.min(axis=-1)
    if tie_break == "copy":
        pos = np.argmin(level_of[draws], axis=-1)
        return np.take_along_axis(draws, pos[..., None], axis=-1)[..., 0]
    raise ValueError(f"unknown tie_break {tie_break!r}")


def energy_measurement_step(state: StateVector, es: EigenSystem, K: int, rng: np.random.Generator,
                            tie_break: str = "index") -> tuple[StateVector, MeasurementOutcome]:
    """Measure K copies of ``state`` in the eigenbasis and keep the lowest outcome."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if state.dim != es.dim:
        raise ValueError("state and eigensystem dimensions differ")
    draws = sample_indices(es.probabilities(state), rng, size=K)
    _, level_of = energy_levels(es.energies)
    chosen = int(select_min(draws, level_of, tie_break))
    out = StateVector(state.shape, es.columns(chosen)[:, 0])
    outcome = MeasurementOutcome(chosen, float(es.energies[chosen]),
                                 tuple(float(e) for e in es.energies[draws]), K)
    return out, outcome


def _upper_tail(p: np.ndarray) -> np.ndarray:
    """Mass strictly after each entry."""
    return np.concatenate([np.cumsum(p[::-1])[::-1][1:], [0.0]])


def min_of_k(p: np.ndarray, energies: np.ndarray, K: int, tie_break: str = "copy") -> np.ndarray:
    """Distribution of the selected outcome when K i.i.d. draws from ``p`` are taken.

    With ``copy`` tie-breaking the selected level has mass (u + p_l)^K - u^K,
    where u is the mass strictly above the level, and is split within the
    level in proportion to ``p``.  With ``index`` tie-breaking the same
    formula is applied per eigen-index in sorted order.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    p = np.asarray(p, dtype=float)
    p = p / p.sum()
    if K == 1:
        return p.copy()
    if tie_break == "index":
        u = _upper_tail(p)
        out = (u + p) ** K - u ** K
    elif tie_break == "copy":
        level_e, level_of = energy_levels(energies)
        lm = np.bincount(level_of, weights=p, minlength=level_e.size)
        lu = _upper_tail(lm)
        lout = (lu + lm) ** K - lu ** K
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(lm[level_of] > 0, p / lm[level_of], 0.0)
        out = lout[level_of] * share
    else:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    out = np.clip(out, 0.0, None)
    return out / out.sum()


def energy_measurement_distribution(mix: ClassicalMixture, old_es: EigenSystem, new_es: EigenSystem,
                                    K: int, tie_break: str = "copy") -> ClassicalMixture:
    """Exact output mixture of best-of-K measurement of ``mix`` in ``new_es``."""
    if mix.basis_ref != old_es.key:
        raise ValueError("mixture is not over old_es")
    if old_es.dim != new_es.dim:
        raise ValueError("eigensystem dimensions differ")
    p = mix.weights if old_es.key == new_es.key else old_es.transition(mix.weights, new_es)
    return ClassicalMixture(new_es.key, min_of_k(p, new_es.energies, K, tie_break))


# -- variational update ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BasisTerm:
    support: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""


def local_operator_basis(h: LocalHamiltonian, include_identity: bool = False) -> list[BasisTerm]:
    """Hermitian basis operators on every distinct term support of ``h``.

    Supports are deduplicated as site sets; each gets the tensor products of
    the single-site bases (Pauli for qubits, Gell-Mann otherwise).
    """
    seen = []
    for t in h.terms:
        key = tuple(sorted(t.support))
        if key not in seen:
            seen.append(key)
    out = []
    for support in seen:
        singles = [local_basis(h.shape.site_dims[s]) for s in support]
        for combo in _product(singles):
            labels = "".join(lab for lab, _ in combo)
            if not include_identity and set(labels) == {"I"}:
                continue
            m = combo[0][1]
            for _, b in combo[1:]:
                m = np.kron(m, b)
            out.append(BasisTerm(support, m, f"{labels}@{','.join(map(str, support))}"))
    return out


def _product(lists):
    if not lists:
        yield ()
        return
    for head in lists[0]:
        for tail in _product(lists[1:]):
            yield (head,) + tail


def _group_by_support(terms: Sequence[BasisTerm]) -> dict[tuple[int, ...], list[int]]:
    groups: dict[tuple[int, ...], list[int]] = {}
    for i, t in enumerate(terms):
        groups.setdefault(t.support, []).append(i)
    return groups


def _reduced_cross(shape: RegisterShape, support: tuple[int, ...], left: np.ndarray,
                   right: np.ndarray) -> np.ndarray:
    """M[a, b] = sum_rest left[a, rest] * conj(right[b, rest])."""
    rest = [s for s in range(shape.n_sites) if s not in support]
    axes = list(support) + rest
    sdim = shape.support_dim(support)
    lt = np.transpose(left.reshape(shape.site_dims), axes).reshape(sdim, -1)
    rt = np.transpose(right.reshape(shape.site_dims), axes).reshape(sdim, -1)
    return lt @ rt.conj().T


def _apply_op(h, vecs: np.ndarray) -> np.ndarray:
    if isinstance(h, HermitianOperator):
        return h.entries @ vecs
    if isinstance(h, LocalHamiltonian):
        return h.apply(vecs)
    return h @ vecs


def _shape_of(h, state: StateVector) -> RegisterShape:
    shape = getattr(h, "shape", None)
    if isinstance(shape, RegisterShape):
        if shape.total_dim != state.dim:
            raise ValueError("state and Hamiltonian dimensions differ")
        return shape
    if h.shape[0] != state.dim:
        raise ValueError("state and Hamiltonian dimensions differ")
    return state.shape


def variational_gradient(state: StateVector, h, basis_terms: Sequence[BasisTerm]) -> np.ndarray:
    """Energy derivatives g_i = d/dtheta <psi|e^{-i theta P_i} H e^{i theta P_i}|psi> at 0.

    Equivalently g_i = 2 Im <psi|P_i H|psi> = -i <psi|[P_i, H]|psi>.  The
    descent direction for P_i is therefore -sign(g_i).
    """
    _shape_of(h, state)
    shape = state.shape
    psi = state.amplitudes
    hpsi = _apply_op(h, psi)
    g = np.zeros(len(basis_terms))
    for support, idx in _group_by_support(basis_terms).items():
        # <psi|P H psi> = sum_ab P[a,b] * M[b,a] with M = Tr_rest |H psi><psi|
        m = _reduced_cross(shape, support, hpsi, psi)
        mats = np.stack([basis_terms[i].matrix for i in idx])
        vals = np.einsum("kab,ba->k", mats, m)
        g[idx] = 2 * vals.imag
    return g


def local_variance(state: StateVector, h, basis_terms: Sequence[BasisTerm]) -> float:
    """sum_i g_i^2, the squared-gradient quantity that controls the first-order drop."""
    g = variational_gradient(state, h, basis_terms)
    return float(g @ g)


@dataclass(frozen=True, eq=False)
class VariationalStep:
    mus: np.ndarray
    theta: float
    generator_terms: tuple[tuple[float, str, tuple[int, ...]], ...]
    energy_before: float
    energy_after: float
    gradient: np.ndarray = field(repr=False, default=None)

    @property
    def drop(self) -> float:
        return self.energy_before - self.energy_after


def default_theta_grid(n: int = 16, lo: float = 1e-3, hi: float = 0.5) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def _generator(shape: RegisterShape, basis_terms, mus, keep) -> sp.csr_matrix:
    dim = shape.total_dim
    g = sp.csr_matrix((dim, dim), dtype=complex)
    local: dict[tuple[int, ...], np.ndarray] = {}
    for i in keep:
        t = basis_terms[i]
        local[t.support] = local.get(t.support, 0) + mus[i] * t.matrix
    for support, m in local.items():
        g = g + embed_sparse(m.astype(complex), support, shape)
    return g.tocsr()


def _energy(h, v: np.ndarray) -> float:
    return float(np.vdot(v, _apply_op(h, v)).real)


def variational_update(state: StateVector, h, basis_terms: Sequence[BasisTerm],
                       theta_mode: str = "line_search", theta: float | None = None,
                       grid: Sequence[float] | None = None,
                       c: float = 0.1) -> tuple[StateVector, VariationalStep]:
    """One update psi -> exp(i G theta) psi with G = sum_i mu_i P_i.

    ``theta_mode``:
      * ``fixed``: use ``theta`` (|theta| < 1).
      * ``prescribed``: theta = c * sum|g_i| / m with m the number of basis terms.
      * ``line_search``: best theta on ``grid`` (default: 16 geometric points
        in [1e-3, 0.5]); theta = 0 is always a candidate, so the energy
        never increases.
    Terms with |g_i| below the gradient cutoff are left out of G.
    """
    if not basis_terms:
        raise ValueError("empty operator basis")
    shape = state.shape
    _shape_of(h, state)
    g = variational_gradient(state, h, basis_terms)
    mus = np.where(g > 0, -1.0, 1.0)
    keep = np.flatnonzero(np.abs(g) > SETTINGS.gradient_cutoff)
    psi = state.amplitudes
    if isinstance(h, LocalHamiltonian):
        h = h.to_sparse()
    e0 = _energy(h, psi)

    def result(th: float, vec: np.ndarray, e1: float):
        terms = tuple((float(mus[i]), basis_terms[i].label, basis_terms[i].support) for i in keep)
        step = VariationalStep(mus, float(th), terms, e0, e1, g)
        return StateVector.normalized(shape, vec), step

    if keep.size == 0:
        return result(0.0, psi, e0)
    gen = 1j * _generator(shape, basis_terms, mus, keep)

    if theta_mode == "fixed":
        if theta is None or not abs(theta) < 1:
            raise ValueError("fixed mode needs |theta| < 1")
        thetas = [float(theta)]
    elif theta_mode == "prescribed":
        thetas = [min(c * float(np.abs(g).sum()) / len(basis_terms), 0.999)]
    elif theta_mode == "line_search":
        thetas = sorted(float(x) for x in (default_theta_grid() if grid is None else grid))
        if any(not 0 < x < 1 for x in thetas):
            raise ValueError("line-search grid must lie in (0, 1)")
    else:
        raise ValueError(f"unknown theta_mode {theta_mode!r}")

    best = (0.0, psi, e0)
    cur, prev = psi, 0.0
    for th in thetas:
        cur = expm_multiply(gen * (th - prev), cur)
        prev = th
        e = _energy(h, cur)
        if theta_mode != "line_search" or e < best[2]:
            best = (th, cur, e)
    return result(*best)
