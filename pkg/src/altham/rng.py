"""Seeded, counter-based random streams.

All sampling in the package takes an explicit ``numpy.random.Generator``;
there is no module-level RNG.  Streams are Philox generators derived from a
``SeedSequence`` so that child streams can be split deterministically.
"""
from __future__ import annotations

import numpy as np


def make_stream(seed: int | np.random.SeedSequence | None) -> np.random.Generator:
    """Return a Philox-backed generator for ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


def split(rng: np.random.Generator, n: int) -> list[np.random.Generator]:
    """Split ``rng`` into ``n`` independent child streams."""
    return list(rng.spawn(n))


def derive(seed: int, *keys: int) -> np.random.Generator:
    """Stream for the sub-task addressed by ``keys`` under master ``seed``.

    The result depends only on ``(seed, keys)``, never on call order, which
    keeps parallel runs reproducible.
    """
    return make_stream(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)))
