"""Quartile energy, mean and variance estimators, spectral profiles."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .models import LocalHamiltonian
from .qop import ClassicalMixture, EigenSystem, HermitianOperator, StateVector

__all__ = [
    "SpectralProfileRow",
    "energy_levels",
    "outcome_distribution",
    "quartile",
    "quartile_from_distribution",
    "mean_energy",
    "variance",
    "spectral_profile",
    "write_profile_csv",
]

QUARTER = 0.25
_MASS_SLACK = 1e-12


@dataclass(frozen=True)
class SpectralProfileRow:
    eigen_index: int
    base_energy: float
    mean_energy: float
    quartile_energy: float


def energy_levels(energies: np.ndarray, tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Group sorted energies into levels.

    Returns ``(level_energy, level_of)`` where ``level_of[a]`` is the level of
    eigen-index ``a``.  Consecutive energies closer than
    ``tol * max(1, |E|_max)`` share a level.
    """
    e = np.asarray(energies, dtype=float)
    if e.size == 0:
        return e, np.zeros(0, dtype=int)
    scale = tol * max(1.0, float(np.max(np.abs(e))))
    new_level = np.concatenate([[True], np.diff(e) > scale])
    level_of = np.cumsum(new_level) - 1
    return e[new_level], level_of


def outcome_distribution(state, es: EigenSystem, mixture_basis: EigenSystem | None = None) -> np.ndarray:
    """Probabilities of measuring each eigenvector of ``es``.

    ``state`` is a :class:`StateVector`, a :class:`ClassicalMixture` (over
    ``es`` itself or over ``mixture_basis``), or an explicit probability vector.
    """
    if isinstance(state, StateVector):
        if state.dim != es.dim:
            raise ValueError("state and eigensystem dimensions differ")
        return es.probabilities(state)
    if isinstance(state, ClassicalMixture):
        if state.weights.size != es.dim:
            raise ValueError("mixture and eigensystem dimensions differ")
        if state.basis_ref == es.key:
            return np.asarray(state.weights)
        if mixture_basis is None or mixture_basis.key != state.basis_ref:
            raise ValueError("mixture is over a different basis; pass that eigensystem as mixture_basis")
        return mixture_basis.transition(state.weights, es)
    p = np.asarray(state, dtype=float)
    if p.shape != (es.dim,):
        raise ValueError("probability vector has the wrong length")
    return p


def _quartile_levels(level_mass: np.ndarray, rule: str) -> int:
    """Index of the quartile level for masses ordered by increasing energy."""
    c = np.cumsum(level_mass, axis=0)
    total = c[-1]
    if rule == "strict":
        # smallest level whose strictly-higher mass is <= 3/4
        return np.argmax(c >= QUARTER * total - _MASS_SLACK, axis=0)
    if rule == "inclusive":
        # smallest level whose at-or-above mass is <= 3/4
        below = np.concatenate([np.zeros((1,) + c.shape[1:]), c[:-1]], axis=0)
        ok = below >= QUARTER * total - _MASS_SLACK
        return np.where(ok.any(axis=0), np.argmax(ok, axis=0), -1)
    raise ValueError(f"unknown quartile rule {rule!r}")


def quartile_from_distribution(p: np.ndarray, energies: np.ndarray, rule: str = "strict",
                               level_tol: float = 1e-9) -> float | np.ndarray:
    """Quartile energy for outcome distribution(s) ``p`` over sorted ``energies``.

    ``p`` may have extra trailing axes (one distribution per column).

    ``strict`` (default): the smallest eigen-energy E such that the mass on
    energies strictly above E is at most 3/4.  This is the lower quartile of
    the outcome distribution; an eigenstate returns its own energy.
    ``inclusive``: the smallest E such that the mass on energies >= E is at
    most 3/4; ``inf`` when no level qualifies.
    """
    level_e, level_of = energy_levels(energies, level_tol)
    p = np.asarray(p, dtype=float)
    mass = np.zeros((level_e.size,) + p.shape[1:])
    np.add.at(mass, level_of, p)
    idx = _quartile_levels(mass, rule)
    out = np.where(idx >= 0, level_e[np.maximum(idx, 0)], np.inf)
    return float(out) if out.ndim == 0 else out


def quartile(state, es: EigenSystem, rule: str = "strict",
             mixture_basis: EigenSystem | None = None) -> float:
    """Quartile energy of ``state`` with respect to ``es``; see :func:`quartile_from_distribution`."""
    return quartile_from_distribution(outcome_distribution(state, es, mixture_basis), es.energies, rule)


def _apply(op, vecs: np.ndarray) -> np.ndarray:
    if isinstance(op, HermitianOperator):
        return op.entries @ vecs
    if isinstance(op, LocalHamiltonian):
        return op.apply(vecs)
    if sp.issparse(op) or isinstance(op, np.ndarray):
        return op @ vecs
    raise TypeError(f"unsupported operator {type(op).__name__}")


def _moments(state, op, mixture_basis: EigenSystem | None):
    if isinstance(op, EigenSystem):
        p = outcome_distribution(state, op, mixture_basis)
        return float(p @ op.energies), float(p @ op.energies ** 2)
    if isinstance(state, StateVector):
        psi = state.amplitudes
        hpsi = _apply(op, psi)
        return float(np.vdot(psi, hpsi).real), float(np.vdot(hpsi, hpsi).real)
    if isinstance(state, ClassicalMixture):
        if mixture_basis is None or mixture_basis.key != state.basis_ref:
            raise ValueError("pass the mixture's eigensystem as mixture_basis")
        keep = np.flatnonzero(state.weights > 0)
        v = mixture_basis.columns(keep)
        hv = _apply(op, v)
        w = state.weights[keep]
        first = np.real(np.einsum("ij,ij->j", v.conj(), hv))
        second = np.real(np.einsum("ij,ij->j", hv.conj(), hv))
        return float(w @ first), float(w @ second)
    raise TypeError(f"unsupported state {type(state).__name__}")


def mean_energy(state, op, mixture_basis: EigenSystem | None = None) -> float:
    """Tr(H rho) for a pure state or an eigenbasis mixture."""
    return _moments(state, op, mixture_basis)[0]


def variance(state, op, mixture_basis: EigenSystem | None = None) -> float:
    """Tr(H^2 rho) - Tr(H rho)^2."""
    m1, m2 = _moments(state, op, mixture_basis)
    return m2 - m1 * m1


def spectral_profile(source: EigenSystem, target: EigenSystem, stride: int = 50,
                     rule: str = "strict") -> list[SpectralProfileRow]:
    """Mean and quartile energy of every ``stride``-th eigenvector of ``source`` against ``target``."""
    if source.dim != target.dim:
        raise ValueError("source and target dimensions differ")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    idx = np.arange(0, source.dim, stride)
    coeff = target.coefficients(source.columns(idx))
    p = coeff.real ** 2 + coeff.imag ** 2
    means = target.energies @ p
    quarts = np.atleast_1d(quartile_from_distribution(p, target.energies, rule))
    return [
        SpectralProfileRow(int(i), float(source.energies[i]), float(m), float(q))
        for i, m, q in zip(idx, means, quarts)
    ]


def write_profile_csv(rows: list[SpectralProfileRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "base_energy", "mean", "quartile"])
        for r in rows:
            w.writerow([r.eigen_index, repr(r.base_energy), repr(r.mean_energy), repr(r.quartile_energy)])
