"""Hamiltonian instances: Max-Cut, quantum Max-Cut, AKLT, Grover and well landscapes."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .qop import (
    EigenSystem,
    HermitianOperator,
    LocalTerm,
    Projector,
    RegisterShape,
    apply_local,
    embed_sparse,
)

__all__ = [
    "Graph",
    "LocalHamiltonian",
    "DiagonalLandscape",
    "random_regular_graph",
    "maxcut_hamiltonian",
    "maxcut_energies",
    "exhaustive_maxcut",
    "qmc_hamiltonian",
    "aklt_projector",
    "aklt_hamiltonian",
    "grover_hamiltonian",
    "well_landscape",
    "landscape_from_energies",
    "landscape_to_operator",
    "hamming_distance",
    "write_edge_list",
    "read_edge_list",
    "write_landscape_csv",
    "read_landscape_csv",
    "load_projector_list",
]


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    degree_bound: int

    def __post_init__(self):
        norm = []
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise ValueError(f"edge ({u}, {v}) out of range")
            norm.append((min(u, v), max(u, v)))
        if len(set(norm)) != len(norm):
            raise ValueError("duplicate edge")
        deg = np.bincount(np.array(norm, dtype=int).reshape(-1), minlength=self.n_vertices)
        if norm and deg.max() > self.degree_bound:
            raise ValueError(f"vertex degree {deg.max()} exceeds bound {self.degree_bound}")
        object.__setattr__(self, "edges", tuple(sorted(norm)))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        return cls(n, tuple((i, (i + 1) % n) for i in range(n)), 2)

    @classmethod
    def path(cls, n: int) -> "Graph":
        return cls(n, tuple((i, i + 1) for i in range(n - 1)), 2)


def random_regular_graph(n: int, degree: int, rng: np.random.Generator,
                         max_tries: int = 100) -> Graph:
    """Random ``degree``-regular graph on ``n`` vertices."""
    if degree >= n:
        raise ValueError(f"degree {degree} must be smaller than n={n}")
    if (n * degree) % 2:
        raise ValueError(f"n*degree = {n * degree} must be even")
    last = None
    for _ in range(max_tries):
        seed = int(rng.integers(2**32))
        try:
            g = nx.random_regular_graph(degree, n, seed=seed)
        except nx.NetworkXError as exc:
            last = exc
            continue
        return Graph(n, tuple(g.edges()), degree)
    raise RuntimeError(f"could not generate a {degree}-regular graph on {n} vertices: {last}")


@dataclass(frozen=True, eq=False)
class LocalHamiltonian:
    """H = sum of local terms on a register.

    Terms are normally :class:`Projector` instances; the literal quantum
    Max-Cut form is the only builder that produces non-projector terms.
    """

    shape: RegisterShape
    terms: tuple[LocalTerm, ...]
    label: str = ""

    def __post_init__(self):
        terms = tuple(self.terms)
        for t in terms:
            self.shape.check_support(t.support)
            if t.matrix.shape[0] != self.shape.support_dim(t.support):
                raise ValueError(f"term on {t.support} has wrong matrix size")
        object.__setattr__(self, "terms", terms)

    @property
    def m(self) -> int:
        return len(self.terms)

    @property
    def locality(self) -> int:
        return max((len(t.support) for t in self.terms), default=0)

    @property
    def is_projector_sum(self) -> bool:
        return all(isinstance(t, Projector) for t in self.terms)

    @property
    def is_diagonal(self) -> bool:
        return all(np.count_nonzero(t.matrix - np.diag(np.diag(t.matrix))) == 0 for t in self.terms)

    def to_sparse(self) -> sp.csr_matrix:
        dim = self.shape.total_dim
        out = sp.csr_matrix((dim, dim), dtype=complex if self._complex else float)
        for t in self.terms:
            out = out + embed_sparse(t.matrix, t.support, self.shape)
        return out.tocsr()

    def to_dense(self) -> HermitianOperator:
        return HermitianOperator(self.shape, self.to_sparse().toarray())

    @property
    def _complex(self) -> bool:
        return any(t.matrix.dtype.kind == "c" for t in self.terms)

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        """H @ vecs without assembling H."""
        vecs = np.asarray(vecs)
        out = np.zeros(vecs.shape, dtype=np.result_type(vecs, complex if self._complex else float))
        for t in self.terms:
            out += apply_local(t.matrix, t.support, self.shape, vecs)
        return out

    def diagonal(self) -> np.ndarray:
        """Diagonal of H in the computational basis."""
        d = np.zeros(self.shape.total_dim)
        for t in self.terms:
            d += embed_sparse(np.diag(np.diag(t.matrix).real), t.support, self.shape).diagonal()
        return d


@dataclass(frozen=True, eq=False)
class DiagonalLandscape:
    """Classical Hamiltonian ``sum_i E_i |i><i|`` on ``n_bits`` qubits."""

    n_bits: int
    energies: np.ndarray
    anchors: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float).reshape(-1)
        if e.size != 2 ** self.n_bits:
            raise ValueError(f"expected {2 ** self.n_bits} energies, got {e.size}")
        if np.any(e < 0):
            raise ValueError("landscape energies must be non-negative")
        if e.min() != 0:
            raise ValueError("landscape minimum energy must be 0; shift it first")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "anchors", tuple((int(i), float(v)) for i, v in self.anchors))

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def shape(self) -> RegisterShape:
        return RegisterShape.qubits(self.n_bits)

    def eigensystem(self) -> EigenSystem:
        return EigenSystem.from_diagonal(self.energies, self.shape)

    def ground_indices(self) -> np.ndarray:
        return np.flatnonzero(self.energies == 0)


# -- Max-Cut ----------------------------------------------------------------

_ZZ_PROJ = np.diag([1.0, 0.0, 0.0, 1.0])


def maxcut_hamiltonian(g: Graph) -> LocalHamiltonian:
    """(1/2)(I + Z_u Z_v) per edge: energy 1 for each uncut edge."""
    terms = tuple(Projector((u, v), _ZZ_PROJ, rank=2) for u, v in g.edges)
    return LocalHamiltonian(RegisterShape.qubits(g.n_vertices), terms, f"maxcut-n{g.n_vertices}")


def _bits(n: int) -> np.ndarray:
    """Array of shape (2^n, n); column k is the bit of site k (site 0 most significant)."""
    idx = np.arange(2 ** n)
    return (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1


def maxcut_energies(g: Graph) -> np.ndarray:
    """Number of uncut edges for every bit string."""
    b = _bits(g.n_vertices)
    e = np.zeros(2 ** g.n_vertices)
    for u, v in g.edges:
        e += b[:, u] == b[:, v]
    return e


def exhaustive_maxcut(g: Graph) -> tuple[int, list[int]]:
    """Maximum cut size and all bit strings attaining it."""
    uncut = maxcut_energies(g)
    best = uncut.min()
    return int(len(g.edges) - best), [int(i) for i in np.flatnonzero(uncut == best)]


# -- quantum Max-Cut ----------------------------------------------------------

_SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=float)


def qmc_hamiltonian(g: Graph, term_form: str = "projector") -> LocalHamiltonian:
    """Quantum Max-Cut on ``g``.

    ``projector``: (I + Swap)/2 per edge, the rank-3 triplet projector.
    ``literal``: (I + XX + YY + ZZ)/4 = Swap/2 per edge, which is not a
    projector and is kept only for comparing energy curves.
    """
    shape = RegisterShape.qubits(g.n_vertices)
    if term_form == "projector":
        terms = tuple(Projector((u, v), (np.eye(4) + _SWAP) / 2, rank=3) for u, v in g.edges)
    elif term_form == "literal":
        terms = tuple(LocalTerm((u, v), _SWAP / 2) for u, v in g.edges)
    else:
        raise ValueError(f"unknown term_form {term_form!r}")
    return LocalHamiltonian(shape, terms, f"qmc-{term_form}-n{g.n_vertices}")


# -- AKLT -------------------------------------------------------------------

def _spin1():
    s = 1 / np.sqrt(2)
    sx = s * np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex)
    sy = s * np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]])
    sz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return sx, sy, sz


def aklt_projector() -> np.ndarray:
    """Projector onto total spin 2 of two spin-1 sites (real 9x9)."""
    ss = sum(np.kron(s, s) for s in _spin1())
    p = np.eye(9) / 3 + ss / 2 + ss @ ss / 6
    return np.real_if_close(p).real.copy()


def aklt_hamiltonian(n_sites: int, periodic: bool = False) -> LocalHamiltonian:
    if n_sites < 2:
        raise ValueError("AKLT chain needs at least 2 sites")
    p = aklt_projector()
    bonds = [(i, i + 1) for i in range(n_sites - 1)]
    if periodic and n_sites > 2:
        bonds.append((n_sites - 1, 0))
    terms = tuple(Projector(b, p, rank=5) for b in bonds)
    kind = "pbc" if periodic else "obc"
    return LocalHamiltonian(RegisterShape.uniform(n_sites, 3), terms, f"aklt-{kind}-n{n_sites}")


# -- diagonal landscapes --------------------------------------------------------

def grover_hamiltonian(n_bits: int, marked: int) -> DiagonalLandscape:
    """I - |marked><marked|."""
    if not 0 <= marked < 2 ** n_bits:
        raise IndexError(f"marked index {marked} out of range for {n_bits} bits")
    e = np.ones(2 ** n_bits)
    e[marked] = 0.0
    return DiagonalLandscape(n_bits, e, ((marked, 0.0),))


def hamming_distance(a, b) -> np.ndarray:
    x = np.bitwise_xor(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    return _popcount(np.atleast_1d(x)).reshape(np.shape(x))


def well_landscape(n_bits: int, n_anchors: int, rng: np.random.Generator, *,
                   distance_weight: float = 2.0, metric: str = "hamming",
                   placement: str = "random") -> DiagonalLandscape:
    """Multi-well landscape.

    Anchors are index 0 and index 2^n - 1 with energy 0, followed by
    ``n_anchors`` distinct indices with energy 1.  Every index takes the
    energy of its nearest anchor plus ``distance_weight`` times the distance,
    ties going to the earlier anchor in the list.

    ``placement="adjacent"`` puts the energy-1 anchors next to the ground
    anchors (alternating between the two ends), and ``metric="index"`` uses
    ``|i - j|`` instead of Hamming distance; together they give a landscape
    without a barrier between the ground states and the nearby energy-1 states.
    """
    if n_bits < 2:
        raise ValueError("n_bits must be >= 2")
    if n_anchors < 0:
        raise ValueError("n_anchors must be >= 0")
    dim = 2 ** n_bits
    if n_anchors > dim - 2:
        raise ValueError(f"cannot place {n_anchors} anchors among {dim - 2} free indices")
    if placement == "random":
        extra = rng.choice(np.arange(1, dim - 1), size=n_anchors, replace=False)
    elif placement == "adjacent":
        left = np.arange(1, dim - 1)
        right = left[::-1]
        extra = np.empty(n_anchors, dtype=np.int64)
        extra[0::2] = left[: (n_anchors + 1) // 2]
        extra[1::2] = right[: n_anchors // 2]
    else:
        raise ValueError(f"unknown placement {placement!r}")
    anchors = [(0, 0.0), (dim - 1, 0.0)] + [(int(a), 1.0) for a in extra]

    idx = np.arange(dim, dtype=np.int64)
    best_dist = np.full(dim, np.iinfo(np.int64).max)
    energies = np.zeros(dim)
    for a, ea in anchors:  # strict '<' keeps the earlier anchor on ties
        if metric == "hamming":
            dist = _popcount(idx ^ a)
        elif metric == "index":
            dist = np.abs(idx - a)
        else:
            raise ValueError(f"unknown metric {metric!r}")
        closer = dist < best_dist
        best_dist[closer] = dist[closer]
        energies[closer] = ea + distance_weight * dist[closer]
    return DiagonalLandscape(n_bits, energies, tuple(anchors))


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    count = np.zeros(x.shape, dtype=np.int64)
    while np.any(x):
        count += (x & np.uint64(1)).astype(np.int64)
        x = x >> np.uint64(1)
    return count


def landscape_from_energies(energies, n_bits: int | None = None) -> DiagonalLandscape:
    """Landscape from arbitrary classical energies, shifted so the minimum is 0."""
    e = np.asarray(energies, dtype=float)
    n = int(round(np.log2(e.size))) if n_bits is None else n_bits
    return DiagonalLandscape(n, e - e.min())


def landscape_to_operator(d: DiagonalLandscape) -> HermitianOperator:
    return HermitianOperator(d.shape, np.diag(d.energies))


# -- plain-text I/O -------------------------------------------------------------

def write_edge_list(g: Graph, path) -> None:
    with open(path, "w") as fh:
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def read_edge_list(path, n_vertices: int | None = None, degree_bound: int | None = None) -> Graph:
    edges = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            u, v = line.split()
            edges.append((int(u), int(v)))
    n = n_vertices if n_vertices is not None else 1 + max(max(e) for e in edges)
    deg = np.bincount(np.array(edges, dtype=int).reshape(-1), minlength=n)
    bound = degree_bound if degree_bound is not None else int(deg.max())
    return Graph(n, tuple(edges), bound)


def write_landscape_csv(d: DiagonalLandscape, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "energy"])
        for i, e in enumerate(d.energies):
            w.writerow([i, repr(float(e))])


def read_landscape_csv(path) -> DiagonalLandscape:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    idx = np.array([int(r["index"]) for r in rows])
    e = np.empty(len(rows))
    e[idx] = [float(r["energy"]) for r in rows]
    return DiagonalLandscape(int(round(np.log2(len(rows)))), e)


def load_projector_list(path, site_dims: Sequence[int], label: str = "") -> LocalHamiltonian:
    """Load projector terms from an ``.npz`` archive.

    The archive holds arrays ``support_<i>`` (site indices) and
    ``matrix_<i>`` (projector on those sites) for i = 0, 1, ...
    """
    data = np.load(path)
    terms = []
    for i in itertools.count():
        if f"matrix_{i}" not in data:
            break
        terms.append(Projector(tuple(data[f"support_{i}"].tolist()), data[f"matrix_{i}"]))
    return LocalHamiltonian(RegisterShape(tuple(site_dims)), tuple(terms), label or Path(path).stem)
