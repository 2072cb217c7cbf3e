"""Simulated-annealing baseline on diagonal landscapes."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .models import DiagonalLandscape

__all__ = ["AnnealConfig", "AnnealTrace", "beta_schedule", "anneal", "anneal_distribution"]


@dataclass(frozen=True)
class AnnealConfig:
    steps: int = 50000
    beta_start: float = 0.1
    beta_end: float = 50.0
    schedule: str = "geometric"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.beta_start <= self.beta_end:
            raise ValueError("need 0 < beta_start <= beta_end")
        if self.schedule not in ("linear", "geometric"):
            raise ValueError("schedule must be 'linear' or 'geometric'")


@dataclass(frozen=True, eq=False)
class AnnealTrace:
    step: np.ndarray
    current: np.ndarray
    best: np.ndarray

    @property
    def best_energy(self) -> float:
        return float(self.best[-1])

    def to_csv(self, path, every: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "current", "best"])
            for k in range(0, self.step.size, every):
                w.writerow([int(self.step[k]), repr(float(self.current[k])), repr(float(self.best[k]))])


def beta_schedule(cfg: AnnealConfig) -> np.ndarray:
    if cfg.schedule == "geometric":
        return np.geomspace(cfg.beta_start, cfg.beta_end, cfg.steps)
    return np.linspace(cfg.beta_start, cfg.beta_end, cfg.steps)


def anneal(landscape: DiagonalLandscape, cfg: AnnealConfig, rng: np.random.Generator) -> AnnealTrace:
    """Metropolis chain with single-bit-flip proposals.

    Starts from a uniformly random bit string; step k proposes flipping one
    uniformly random bit and accepts with probability min(1, exp(-beta_k dE)).
    """
    e = landscape.energies
    n = landscape.n_bits
    betas = beta_schedule(cfg)
    flips = rng.integers(n, size=cfg.steps)
    u = rng.random(cfg.steps)
    x = int(rng.integers(2 ** n))
    cur = float(e[x])
    best = cur
    current = np.empty(cfg.steps)
    best_arr = np.empty(cfg.steps)
    for k in range(cfg.steps):
        y = x ^ (1 << int(flips[k]))
        de = e[y] - cur
        if de <= 0 or u[k] < np.exp(-betas[k] * de):
            x, cur = y, float(e[y])
            if cur < best:
                best = cur
        current[k] = cur
        best_arr[k] = best
    return AnnealTrace(np.arange(1, cfg.steps + 1), current, best_arr)


def anneal_distribution(landscape: DiagonalLandscape, cfg: AnnealConfig,
                        record_every: int = 1) -> AnnealTrace:
    """Exact evolution of the chain's state distribution from the uniform start.

    ``current`` is the mean energy of the distribution after each step and
    ``best`` its running minimum; no randomness is involved.
    """
    e = landscape.energies
    n = landscape.n_bits
    idx = np.arange(e.size)
    nbrs = idx[:, None] ^ (1 << np.arange(n))[None, :]
    de = e[nbrs] - e[:, None]  # (dim, n)
    p = np.full(e.size, 1.0 / e.size)
    steps, means = [], []
    for k, beta in enumerate(beta_schedule(cfg)):
        acc = np.exp(-beta * np.clip(de, 0, None)) / n  # move probabilities
        stay = 1.0 - acc.sum(axis=1)
        moved = np.zeros_like(p)
        np.add.at(moved, nbrs.reshape(-1), (p[:, None] * acc).reshape(-1))
        p = p * stay + moved
        if (k + 1) % record_every == 0 or k + 1 == cfg.steps:
            steps.append(k + 1)
            means.append(float(p @ e))
    means = np.array(means)
    return AnnealTrace(np.array(steps), means, np.minimum.accumulate(means))
