"""Alternating minimization over altered Hamiltonian families."""

__version__ = "0.1.0"
