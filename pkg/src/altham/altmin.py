"""Alternating-minimization drivers.

Measurement-based runs start from K^L copies.  Each iteration measures every
copy in the eigenbasis of the current Hamiltonian, keeps the best of each
batch of K, then replaces the Hamiltonian with a fresh altered sample.  Two
simulation modes are provided:

* ``exact_distribution``: the per-copy outcome distribution is evolved
  exactly, using the min-of-K order statistic.
* ``trajectory``: the copies themselves are simulated (``population``), or a
  single chain that re-measures K copies of one realised state (``single``).

The Hamiltonian sequence is drawn from its own stream, so trajectory and
exact runs with the same seed see the same Hamiltonians.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .altered import (
    SparsityPattern,
    altered_hamiltonian,
    sample_local_alteration,
    sample_sparse_alteration,
    sparse_altered_matrix,
)
from .lowering import (
    BasisTerm,
    local_operator_basis,
    min_of_k,
    select_min,
    variational_update,
)
from .models import DiagonalLandscape, LocalHamiltonian, landscape_from_energies
from .qop import EigenSystem, RegisterShape, StateVector, embed_sparse, sample_indices, spectral
from .stats import energy_levels, quartile_from_distribution

__all__ = [
    "AltMinConfig",
    "TraceRow",
    "RunTrace",
    "physical_copy_count",
    "initial_state",
    "sparse_eigensystem",
    "HamiltonianFamily",
    "altmin_measurement",
    "altmin_variational",
    "appendix_b_diagnostics",
    "SCHEDULES",
]

FAMILIES = ("local", "sparse_band", "sparse_hamming")
MODES = ("trajectory", "exact_distribution")
SCHEDULES = ("standard", "hybrid", "altered")


@dataclass(frozen=True)
class AltMinConfig:
    L: int
    K: int
    family: str = "local"
    t: int = 4
    mode: str = "exact_distribution"
    trajectory: str = "population"
    tie_break: str = "copy"
    quartile_rule: str = "strict"
    diagnostics: bool = True
    store_states: bool = False

    def __post_init__(self):
        if self.L < 1 or self.K < 1:
            raise ValueError("L and K must be >= 1")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.trajectory not in ("population", "single"):
            raise ValueError("trajectory must be 'population' or 'single'")

    @property
    def pattern_kind(self) -> str | None:
        return {"sparse_band": "band", "sparse_hamming": "hamming"}.get(self.family)


def physical_copy_count(K: int, L: int) -> int:
    """K^L + K^(L-1) + ... + 1."""
    return sum(K ** i for i in range(L + 1))


@dataclass
class TraceRow:
    iteration: int
    energy_base: float
    energy_current: float
    k: float | None = None
    measurements_logical: int = 0
    measurements_physical: int = 0
    hamiltonian_id: int = 0
    theta: float | None = None


@dataclass
class RunTrace:
    rows: list[TraceRow] = field(default_factory=list)
    K: int = 1
    L: int = 0
    kind: str = "measurement"
    # per iteration, Tr(psi_i sum_j Pi_j/d_j) and Tr(psi_{i+1} sum_j v_ij)
    corr_first: list[float] = field(default_factory=list)
    corr_second: list[float] = field(default_factory=list)
    states: list = field(default_factory=list)

    @property
    def physical_copy_count(self) -> int:
        return physical_copy_count(self.K, self.L)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy_base for r in self.rows])

    @property
    def final_energy(self) -> float:
        return self.rows[-1].energy_base

    def to_csv(self, path) -> None:
        names = [f.name for f in fields(TraceRow)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.rows:
                w.writerow(["" if getattr(r, n) is None else _fmt(getattr(r, n)) for n in names])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


# -- initial states ----------------------------------------------------------------

def initial_state(spec, shape: RegisterShape, rng: np.random.Generator | None = None) -> StateVector:
    """Named initial states.

    ``plus`` / ``uniform_product``: equal superposition on every site (|+>^n
    for qubits, (|1>+|0>+|-1>)/sqrt(3) per qutrit); ``haar``: Haar-random;
    ``basis:<int>`` or ``bits:<string>``: a computational basis state; a path
    ending in ``.npy``: amplitudes loaded from file; an array: amplitudes.
    """
    if isinstance(spec, StateVector):
        return spec
    if not isinstance(spec, str):
        return StateVector.normalized(shape, np.asarray(spec))
    if spec in ("plus", "uniform_product"):
        return StateVector.uniform_product(shape)
    if spec == "haar":
        if rng is None:
            raise ValueError("haar initial state needs a random stream")
        return StateVector.haar(shape, rng)
    if spec.startswith("basis:"):
        return StateVector.basis(shape, int(spec.split(":", 1)[1]))
    if spec.startswith("bits:"):
        digits = [int(c) for c in spec.split(":", 1)[1]]
        return StateVector.basis(shape, int(np.ravel_multi_index(digits, shape.site_dims)))
    if spec.endswith(".npy"):
        return StateVector.normalized(shape, np.load(spec))
    raise ValueError(f"unknown initial state {spec!r}")


# -- Hamiltonian sequence ------------------------------------------------------------

def sparse_eigensystem(base: DiagonalLandscape, s) -> EigenSystem:
    """Eigensystem of H_{T,f} for a diagonal base.

    Zero-energy computational states have identically zero rows and columns
    in H_{T,f}, so they are kept as exact eigenvectors and only the remaining
    block is diagonalised.
    """
    m = sparse_altered_matrix(base, s)
    zero = np.flatnonzero(base.energies == 0)
    rest = np.flatnonzero(base.energies != 0)
    block = m[rest][:, rest].toarray()
    w, v = scipy.linalg.eigh(block, driver="evd", check_finite=False)
    dim = base.dim
    energies = np.concatenate([np.zeros(zero.size), w])
    basis = np.zeros((dim, dim))
    basis[zero, np.arange(zero.size)] = 1.0
    basis[np.ix_(rest, np.arange(zero.size, dim))] = v
    order = np.argsort(energies, kind="stable")
    return EigenSystem(energies[order], basis=basis[:, order], shape=base.shape)


class HamiltonianFamily:
    """Produces the base eigensystem and fresh altered eigensystems."""

    def __init__(self, base, cfg: AltMinConfig):
        self.cfg = cfg
        if isinstance(base, DiagonalLandscape):
            self.landscape = base
            self.h = None
        elif isinstance(base, LocalHamiltonian):
            self.h = base
            self.landscape = None
            if cfg.family != "local":
                if not base.is_diagonal:
                    raise ValueError("sparse families need a diagonal (classical) base Hamiltonian")
                self.landscape = landscape_from_energies(base.diagonal(), base.shape.n_sites)
        else:
            raise TypeError(f"unsupported base {type(base).__name__}")
        if cfg.family == "local" and self.h is None:
            raise ValueError("the local family needs a LocalHamiltonian base")
        if cfg.family != "local":
            self.pattern = SparsityPattern(cfg.pattern_kind, self.landscape.n_bits, cfg.t)
        self.shape = self.h.shape if self.h is not None else self.landscape.shape
        # sparse family on a classical H works with the shifted landscape but
        # reports energies of the unshifted H
        self.offset = 0.0
        if self.h is not None:
            self.h_sparse = self.h.to_sparse()
            if self.landscape is not None:
                self.offset = float(self.h.diagonal().min())
        else:
            self.h_sparse = sp.diags(self.landscape.energies).tocsr()
        self.pi_over_d = None
        if self.h is not None and cfg.family == "local" and cfg.diagnostics:
            acc = sp.csr_matrix((self.shape.total_dim,) * 2)
            for t in self.h.terms:
                acc = acc + embed_sparse(t.matrix / t.rank, t.support, self.shape)
            self.pi_over_d = acc.tocsr()

    def base_eigensystem(self) -> EigenSystem:
        if self.landscape is not None and (self.h is None or self.cfg.family != "local"):
            return EigenSystem.from_diagonal(self.landscape.energies + self.offset, self.shape)
        if self.h.is_diagonal:
            return EigenSystem.from_diagonal(self.h.diagonal(), self.shape)
        return spectral(self.h.to_dense())

    def sample(self, rng: np.random.Generator):
        """Return (eigensystem, alteration operator or None)."""
        if self.cfg.family == "local":
            a = sample_local_alteration(self.h, rng)
            ha = altered_hamiltonian(self.h, a)
            es = spectral(ha.to_dense())
            v = None
            if self.cfg.diagnostics:
                v = sp.csr_matrix((self.shape.total_dim,) * 2, dtype=complex)
                for phi in a.phis:
                    v = v + embed_sparse(phi.matrix, phi.support, self.shape)
            return es, v
        s = sample_sparse_alteration(self.landscape, self.pattern, rng)
        es = sparse_eigensystem(self.landscape, s)
        if self.offset:
            es = EigenSystem(es.energies + self.offset, basis=es.basis, shape=es.shape)
        return es, None

    def base_diag(self, es: EigenSystem) -> np.ndarray:
        return es.diagonal_expectations(self.h_sparse)


def _column_probs(old: EigenSystem, idx: np.ndarray, new: EigenSystem) -> np.ndarray:
    """|<xi'_b|xi_a>|^2 for a in ``idx``; shape (dim, len(idx))."""
    c = new.coefficients(old.columns(idx))
    return c.real ** 2 + c.imag ** 2 if np.iscomplexobj(c) else c ** 2


# -- measurement-based -----------------------------------------------------------------------

def altmin_measurement(h_base, cfg: AltMinConfig, rng: np.random.Generator,
                       initial="plus") -> RunTrace:
    """Measurement-based alternating minimization; see module docstring."""
    fam = HamiltonianFamily(h_base, cfg)
    ham_rng, meas_rng, init_rng = rng.spawn(3)
    psi0 = initial_state(initial, fam.shape, init_rng)
    K, L = cfg.K, cfg.L
    trace = RunTrace(K=K, L=L, kind="measurement")

    es = fam.base_eigensystem()
    e0 = float(np.vdot(psi0.amplitudes, fam.h_sparse @ psi0.amplitudes).real)
    trace.rows.append(TraceRow(0, e0, e0, hamiltonian_id=0))

    p = es.probabilities(psi0)  # outcome distribution of psi_i in the current basis
    v_cur = None
    pop = None  # trajectory mode: eigen-indices of surviving copies in ``es``
    for i in range(L):
        base_diag = fam.base_diag(es)
        k_i = float(p @ es.energies) - quartile_from_distribution(p, es.energies, cfg.quartile_rule)
        if fam.pi_over_d is not None and v_cur is not None:
            trace.corr_first.append(_mixture_expectation(prev_es, prev_q, fam.pi_over_d))

        if cfg.mode == "exact_distribution":
            q = min_of_k(p, es.energies, K, cfg.tie_break)
            e_base, e_cur = float(q @ base_diag), float(q @ es.energies)
        else:
            n_copies = K ** (L - i) if cfg.trajectory == "population" else K
            if pop is None:
                draws = sample_indices(p, meas_rng, size=n_copies)
            else:
                draws = _measure_population(prev_es, pop, es, meas_rng, cfg.trajectory == "single", K)
            _, level_of = energy_levels(es.energies)
            pop = select_min(draws.reshape(-1, K), level_of, cfg.tie_break)
            q = np.bincount(pop, minlength=es.dim) / pop.size
            e_base, e_cur = float(base_diag[pop].mean()), float(es.energies[pop].mean())

        if v_cur is not None:
            trace.corr_second.append(_mixture_expectation(es, q, v_cur))
        if cfg.store_states:
            trace.states.append((es, q))
        n_phys = K ** (L - i)
        trace.rows.append(TraceRow(i + 1, e_base, e_cur, k_i, K, n_phys, i))

        if i == L - 1:
            break
        new_es, v_new = fam.sample(ham_rng)
        if cfg.mode == "exact_distribution":
            p = es.transition(q, new_es)
        else:
            p = _population_distribution(es, pop, new_es)
        prev_es, prev_q = es, q
        es, v_cur = new_es, v_new
    return trace


def _mixture_expectation(es: EigenSystem, q: np.ndarray, op) -> float:
    keep = np.flatnonzero(q > 0)
    v = es.columns(keep)
    return float(np.real(np.einsum("ij,ij->j", v.conj(), op @ v)) @ q[keep])


def _population_distribution(old: EigenSystem, pop: np.ndarray, new: EigenSystem) -> np.ndarray:
    weights = np.bincount(pop, minlength=old.dim) / pop.size
    return old.transition(weights, new)


def _measure_population(old: EigenSystem, pop: np.ndarray, new: EigenSystem,
                        rng: np.random.Generator, single: bool, K: int) -> np.ndarray:
    """Measure every surviving copy in ``new``; returns eigen-indices in copy order."""
    if single:
        col = _column_probs(old, pop[:1], new)[:, 0]
        return sample_indices(col, rng, size=K)
    out = np.empty(pop.size, dtype=np.int64)
    uniq, inverse = np.unique(pop, return_inverse=True)
    cols = _column_probs(old, uniq, new)
    for j, a in enumerate(uniq):
        where = np.flatnonzero(inverse == j)
        out[where] = sample_indices(cols[:, j], rng, size=where.size)
    return out


# -- variational ----------------------------------------------------------------------------

def altmin_variational(h: LocalHamiltonian, schedule: str, L: int, initial, rng: np.random.Generator,
                       basis: list[BasisTerm] | None = None, theta_mode: str = "line_search",
                       stall_window: int = 5, stall_tol: float = 1e-4,
                       store_states: bool = False) -> RunTrace:
    """Variational alternating minimization with the standard, hybrid or altered schedule.

    ``standard`` always optimizes H.  ``altered`` optimizes H on the first
    step and a fresh altered sample on every later step.  ``hybrid``
    optimizes H until the energy stalls, then one altered sample until it
    stalls, then a fresh sample, and so on.  A stall is a relative
    improvement below ``stall_tol`` over the last ``stall_window`` steps on
    the current Hamiltonian.
    """
    if schedule not in SCHEDULES:
        raise ValueError(f"schedule must be one of {SCHEDULES}")
    if not isinstance(h, LocalHamiltonian):
        raise TypeError("the variational path needs a LocalHamiltonian")
    ham_rng, init_rng = rng.spawn(2)
    psi = initial_state(initial, h.shape, init_rng)
    basis = local_operator_basis(h) if basis is None else basis
    h_sparse = h.to_sparse()
    trace = RunTrace(K=1, L=L, kind=f"variational-{schedule}")

    def base_energy(state):
        return float(np.vdot(state.amplitudes, h_sparse @ state.amplitudes).real)

    e = base_energy(psi)
    trace.rows.append(TraceRow(0, e, e, hamiltonian_id=0))
    if store_states:
        trace.states.append(psi)
    current, ham_id = h_sparse, 0
    history: list[float] = []  # current-H energies since the last switch
    for step in range(L):
        switch = False
        if schedule == "altered" and step > 0:
            switch = True
        elif schedule == "hybrid" and _stalled(history, stall_window, stall_tol):
            switch = True
        if switch:
            a = sample_local_alteration(h, ham_rng)
            current = altered_hamiltonian(h, a).to_sparse()
            ham_id += 1
            history = []
        psi, st = variational_update(psi, current, basis, theta_mode)
        if not history:
            history.append(st.energy_before)
        history.append(st.energy_after)
        trace.rows.append(TraceRow(step + 1, base_energy(psi), st.energy_after,
                                   measurements_logical=0, hamiltonian_id=ham_id, theta=st.theta))
        if store_states:
            trace.states.append(psi)
    return trace


def _stalled(history: list[float], window: int, tol: float) -> bool:
    if len(history) <= window:
        return False
    old, new = history[-window - 1], history[-1]
    return (old - new) <= tol * max(abs(old), 1e-12)


# -- diagnostics -------------------------------------------------------------------------

def appendix_b_diagnostics(trace: RunTrace) -> tuple[float, float]:
    """(mean k_i, correlation quantity) from a local-family measurement run.

    The correlation quantity averages Tr(psi_i sum_j Pi_j/d_j) minus
    Tr(psi_{i+1} sum_j v_ij) over the iterations that used an altered
    Hamiltonian (the first iteration measures against H itself).
    """
    ks = [r.k for r in trace.rows if r.k is not None]
    if not ks:
        raise ValueError("trace has no measurement iterations")
    if len(trace.corr_first) != len(trace.corr_second):
        raise ValueError("trace is missing stored diagnostic states")
    mean_k = float(np.mean(ks))
    if not trace.corr_first:
        return mean_k, 0.0
    corr = float(np.mean(trace.corr_first) - np.mean(trace.corr_second))
    return mean_k, corr
