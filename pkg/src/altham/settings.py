"""Global numeric tolerances and size limits.

Every invariant check in the package reads its tolerance from ``SETTINGS``;
use :func:`override` to change values temporarily.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass, fields


@dataclass
class Settings:
    hermitian_tol: float = 1e-10
    unitary_tol: float = 1e-8
    reconstruction_tol: float = 1e-8
    norm_tol: float = 1e-10
    projector_tol: float = 1e-10
    trace_tol: float = 1e-8
    psd_tol: float = 1e-8
    gradient_cutoff: float = 1e-12
    # mixture weights below this total are dropped before basis changes
    mixture_prune: float = 1e-14
    max_dim: int = 2**13


SETTINGS = Settings()


@contextlib.contextmanager
def override(**kwargs):
    """Temporarily replace fields of the global settings."""
    names = {f.name for f in fields(Settings)}
    unknown = set(kwargs) - names
    if unknown:
        raise KeyError(f"unknown settings: {sorted(unknown)}")
    saved = {k: getattr(SETTINGS, k) for k in kwargs}
    for k, v in kwargs.items():
        setattr(SETTINGS, k, v)
    try:
        yield SETTINGS
    finally:
        for k, v in saved.items():
            setattr(SETTINGS, k, v)
