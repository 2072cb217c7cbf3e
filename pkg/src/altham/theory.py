"""Expected-variance identities and lower bounds for both altered families.

Closed forms are evaluated from partial traces (local family) or from the
amplitudes and pattern sums (sparse family).  The Monte Carlo estimators
sample actual altered Hamiltonians and share no algebra with the closed
forms.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np

from .altered import SparsityPattern, pattern_columns, sample_sparse_alteration
from .models import DiagonalLandscape, LocalHamiltonian
from .qop import StateVector, embed_sparse, haar_vectors_in_range

__all__ = [
    "VarianceReport",
    "purification",
    "expected_variance_local_closed_form",
    "local_variance_samples",
    "theorem1_bounds",
    "theorem1_bound_check",
    "sparse_moment_closed_forms",
    "sparse_intermediate_bound",
    "sparse_moment_samples",
    "theorem2_bound_check",
    "fit_loglog_slope",
    "write_reports_csv",
]


@dataclass(frozen=True)
class VarianceReport:
    mc_estimate: float
    stderr: float
    closed_form: float
    lower_bound: float
    n_samples: int
    # bound that does follow from the closed form (local family only)
    proven_lower_bound: float | None = None
    violated: bool = False

    def __post_init__(self):
        if self.n_samples < 100:
            raise ValueError("at least 100 samples are required")
        if not self.stderr >= 0:
            raise ValueError("stderr must be non-negative")

    @property
    def z_closed_form(self) -> float:
        """(mc - closed_form) / stderr."""
        return (self.mc_estimate - self.closed_form) / self.stderr if self.stderr > 0 else 0.0

    def summary(self) -> str:
        return (f"mc={self.mc_estimate:.6g}+-{self.stderr:.2g} closed={self.closed_form:.6g} "
                f"bound={self.lower_bound:.6g} n={self.n_samples} violated={self.violated}")


def write_reports_csv(reports: list[VarianceReport], path, labels: list[str] | None = None) -> None:
    names = ["label"] + list(asdict(reports[0]).keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for i, r in enumerate(reports):
            row = asdict(r)
            label = labels[i] if labels else str(i)
            w.writerow([label] + ["" if v is None else (repr(v) if isinstance(v, float) else v)
                                  for v in row.values()])


def _mc_summary(values: np.ndarray) -> tuple[float, float]:
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(values.size))


# -- local family -------------------------------------------------------------------------

def purification(state, dim: int) -> np.ndarray:
    """Columns A with rho = A A^dagger (a single column for a pure state)."""
    if isinstance(state, StateVector):
        return state.amplitudes.reshape(-1, 1)
    rho = np.asarray(state)
    if rho.ndim == 1:
        return rho.reshape(-1, 1).astype(complex)
    if rho.shape != (dim, dim):
        raise ValueError("density matrix has the wrong shape")
    w, v = np.linalg.eigh(rho)
    keep = w > 1e-14
    return v[:, keep] * np.sqrt(w[keep])


def _reduced(a: np.ndarray, support, shape) -> np.ndarray:
    """Reduced state on ``support`` of rho = A A^dagger, without forming rho."""
    n = shape.n_sites
    rest = [s for s in range(n) if s not in support]
    at = a.reshape(tuple(shape.site_dims) + (a.shape[1],))
    m = np.transpose(at, list(support) + rest + [n]).reshape(shape.support_dim(support), -1)
    return m @ m.conj().T


def _var_of(h: LocalHamiltonian, weights: np.ndarray, a: np.ndarray) -> float:
    ga = np.zeros(a.shape, dtype=complex)
    for w, t in zip(weights, h.terms):
        ga += w * (embed_sparse(t.matrix, t.support, h.shape) @ a)
    m1 = np.vdot(a, ga).real
    m2 = np.vdot(ga, ga).real
    return float(m2 - m1 * m1)


def expected_variance_local_closed_form(h: LocalHamiltonian, state) -> float:
    """E_phi Var_psi(H_phi) for independent Haar phi_i inside range(Pi_i).

    Equal to Var_psi(sum_i (1 + 1/d_i) Pi_i) plus, for each term with
    p_i = Tr(Pi_i psi_i) and psi_i the reduced state on its support,
    (d-1)/d^2 p_i - Tr((Pi psi_i Pi)^2)/(d(d+1)) + p_i^2/(d^2(d+1)).
    """
    if not h.is_projector_sum:
        raise ValueError("closed form needs projector terms")
    a = purification(state, h.shape.total_dim)
    d = np.array([t.rank for t in h.terms], dtype=float)
    total = _var_of(h, 1 + 1 / d, a)
    for di, t in zip(d, h.terms):
        r = _reduced(a, t.support, h.shape)
        prp = t.matrix @ r @ t.matrix
        p = np.trace(prp).real
        total += (di - 1) / di ** 2 * p - np.trace(prp @ prp).real / (di * (di + 1)) \
            + p * p / (di ** 2 * (di + 1))
    return float(total)


def theorem1_bounds(h: LocalHamiltonian, state) -> tuple[float, float]:
    """(stated bound, proven bound) on E Var_psi(H_phi).

    Stated: Var_psi(G) + Tr(H psi) / max_i d_i with G = sum (1 + 1/d_i) Pi_i.
    Proven: Var_psi(G) + sum_i (d_i - 1)/(d_i (d_i + 1)) Tr(Pi_i psi), which
    follows from the closed form using Tr((Pi psi_i Pi)^2) <= p_i^2 and p_i <= 1.
    """
    a = purification(state, h.shape.total_dim)
    d = np.array([t.rank for t in h.terms], dtype=float)
    var_g = _var_of(h, 1 + 1 / d, a)
    p = np.array([np.trace(_reduced(a, t.support, h.shape) @ t.matrix).real for t in h.terms])
    stated = var_g + p.sum() / d.max()
    proven = var_g + float(((d - 1) / (d * (d + 1))) @ p)
    return float(stated), float(proven)


def local_variance_samples(h: LocalHamiltonian, state, n_samples: int, rng: np.random.Generator,
                           batch: int = 2000) -> np.ndarray:
    """Var_psi(H_phi) for ``n_samples`` independent alterations."""
    shape = h.shape
    dim = shape.total_dim
    a = purification(state, dim)  # (dim, r)
    r = a.shape[1]
    n = shape.n_sites
    at = a.reshape(shape.site_dims + (r,))
    ha = h.apply(a)
    out = np.empty(n_samples)
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        acc = np.broadcast_to(ha, (b,) + ha.shape).astype(complex)
        mean = np.full(b, np.vdot(a, ha).real)
        for t in h.terms:
            support = t.support
            rest = [s for s in range(n) if s not in support]
            perm = list(support) + rest + [n]
            sdim = shape.support_dim(support)
            a_perm = np.transpose(at, perm).reshape(sdim, -1)
            v = haar_vectors_in_range(t, rng, b)  # (b, sdim)
            w = v.conj() @ a_perm  # (b, rest*r)
            mean += np.einsum("bk,bk->b", w.conj(), w).real
            contrib = v[:, :, None] * w[:, None, :]
            contrib = contrib.reshape((b,) + tuple(shape.site_dims[s] for s in support)
                                      + tuple(shape.site_dims[s] for s in rest) + (r,))
            inv = np.argsort(perm)
            contrib = np.transpose(contrib, [0] + [1 + i for i in inv]).reshape(b, dim, r)
            acc = acc + contrib
        second = np.einsum("bij,bij->b", acc.conj(), acc).real
        out[done:done + b] = second - mean ** 2
        done += b
    return out


def theorem1_bound_check(h: LocalHamiltonian, state, n_samples: int, rng: np.random.Generator,
                         batch: int = 2000) -> VarianceReport:
    """Monte Carlo E Var_psi(H_phi) against the closed form and the stated bound.

    ``violated`` is set when the estimate falls below the stated bound by
    more than 3 standard errors.
    """
    vals = local_variance_samples(h, state, n_samples, rng, batch)
    mc, se = _mc_summary(vals)
    closed = expected_variance_local_closed_form(h, state)
    stated, proven = theorem1_bounds(h, state)
    return VarianceReport(mc, se, closed, stated, n_samples, proven, mc < stated - 3 * se)


# -- sparse family ------------------------------------------------------------------------

def _pattern_sums(pattern: SparsityPattern, col_values: np.ndarray) -> np.ndarray:
    """S_a = sum_b T_ab col_values[b], built column by column."""
    out = np.zeros(pattern.dim, dtype=col_values.dtype)
    for b in np.flatnonzero(col_values):
        rows = pattern_columns(pattern, int(b))
        out[rows] += col_values[b]
    return out


def _sparse_parts(base: DiagonalLandscape, pattern: SparsityPattern, state: StateVector):
    a = np.asarray(state.amplitudes if isinstance(state, StateVector) else state, dtype=complex)
    e = base.energies
    if a.size != e.size or pattern.dim != e.size:
        raise ValueError("dimension mismatch")
    t = np.array([len(pattern_columns(pattern, b)) for b in range(pattern.dim)], dtype=float)
    w = np.abs(a) ** 2
    A = _pattern_sums(pattern, w * e / t)
    B = _pattern_sums(pattern, a ** 2 * e / t)
    C = _pattern_sums(pattern, e / t)
    return a, e, t, w, A, B, C


def sparse_moment_closed_forms(base: DiagonalLandscape, pattern: SparsityPattern, state,
                               variant: str = "exact") -> tuple[float, float]:
    """(E_f Tr(psi H_Tf)^2, E_f Tr(psi H_Tf^2)) for a pure state.

    With A_a = sum_b T_ab |a_b|^2 E_b/t_b, B_a = sum_b T_ab a_b^2 E_b/t_b and
    C_a = sum_b T_ab E_b/t_b:

      m1sq = 4 e^2 + sum_a A_a^2 + sum_a |B_a|^2        (e = Tr(psi H))
      m2   = 4 Tr(psi H^2) + sum_b |a_b|^2 E_b^2/t_b + sum_a A_a C_a

    ``variant="as_published"`` replaces sum_a A_a^2 by
    sum_b |a_b|^4 E_b^2/t_b, which agrees with the exact value only when
    the state is a single basis vector.
    """
    a, e, t, w, A, B, C = _sparse_parts(base, pattern, state)
    mean = float(w @ e)
    if variant == "exact":
        mid = float(A @ A)
    elif variant == "as_published":
        mid = float((w ** 2 * e ** 2 / t).sum())
    else:
        raise ValueError(f"unknown variant {variant!r}")
    m1sq = 4 * mean ** 2 + mid + float((np.abs(B) ** 2).sum())
    m2 = 4 * float(w @ e ** 2) + float((w * e ** 2 / t).sum()) + float(A @ C)
    return m1sq, m2


def sparse_intermediate_bound(base: DiagonalLandscape, pattern: SparsityPattern, state) -> float:
    """sum_{b,b''} |a_b|^2 (1 - |a_b''|^2) E_b E_b'' / (t_b t_b'') sum_a T_ab T_ab''."""
    a, e, t, w, A, B, C = _sparse_parts(base, pattern, state)
    return float(A @ (C - A))


def sparse_moment_samples(base: DiagonalLandscape, pattern: SparsityPattern, state, n_samples: int,
                          rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw Tr(psi H_Tf)^2 and Tr(psi H_Tf^2) from sampled alterations."""
    a = np.asarray(state.amplitudes if isinstance(state, StateVector) else state, dtype=complex)
    e = base.energies
    first = np.empty(n_samples)
    second = np.empty(n_samples)
    for k in range(n_samples):
        s = sample_sparse_alteration(base, pattern, rng)
        y = s.f @ a
        ha = e * a + s.f.T @ y
        first[k] = np.vdot(a, ha).real ** 2
        second[k] = np.vdot(ha, ha).real
    return first, second


def theorem2_bound_check(base: DiagonalLandscape, pattern: SparsityPattern, state, n_samples: int,
                         rng: np.random.Generator) -> VarianceReport:
    """Monte Carlo expected variance vs the closed form and the intermediate bound."""
    a = np.asarray(state.amplitudes if isinstance(state, StateVector) else state, dtype=complex)
    e = base.energies
    vals = np.empty(n_samples)
    for k in range(n_samples):
        s = sample_sparse_alteration(base, pattern, rng)
        ha = e * a + s.f.T @ (s.f @ a)
        m1 = np.vdot(a, ha).real
        vals[k] = np.vdot(ha, ha).real - m1 * m1
    mc, se = _mc_summary(vals)
    m1sq, m2 = sparse_moment_closed_forms(base, pattern, a)
    bound = sparse_intermediate_bound(base, pattern, a)
    return VarianceReport(mc, se, m2 - m1sq, bound, n_samples, None, mc < bound - 3 * se)


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x over positive pairs."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        raise ValueError("need at least two positive points")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])
