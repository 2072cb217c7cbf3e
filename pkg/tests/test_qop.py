import itertools

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from altham.qop import (
    ClassicalMixture,
    DimensionCapError,
    EigenSystem,
    HermitianOperator,
    LocalTerm,
    Projector,
    RegisterShape,
    StateVector,
    embed,
    haar_in_range,
    haar_vectors_in_range,
    measure_in_basis,
    operator_basis,
    partial_trace_to_support,
    spectral,
)
from altham.rng import derive, make_stream, split
from altham.settings import SETTINGS, override

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.diag([1.0, -1.0])


def kron_all(mats):
    out = np.eye(1)
    for m in mats:
        out = np.kron(out, m)
    return out


def brute_embed(matrix, support, dims):
    """Kronecker with identity on the rest, then permute sites into place."""
    n = len(dims)
    rest = [s for s in range(n) if s not in support]
    order = list(support) + rest
    big = np.kron(matrix, np.eye(int(np.prod([dims[s] for s in rest]))))
    t = big.reshape([dims[s] for s in order] * 2)
    inv = np.argsort(order)
    t = np.transpose(t, list(inv) + [i + n for i in inv])
    d = int(np.prod(dims))
    return t.reshape(d, d)


def random_hermitian(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


class TestRegisterShape:
    def test_cap(self):
        with pytest.raises(DimensionCapError):
            RegisterShape.qubits(14)
        with override(max_dim=2 ** 14):
            assert RegisterShape.qubits(14).total_dim == 2 ** 14

    def test_bad_site_dim(self):
        with pytest.raises(ValueError):
            RegisterShape((2, 1))

    def test_support_checks(self):
        shape = RegisterShape((2, 3, 2))
        assert shape.support_dim((1, 2)) == 6
        with pytest.raises(ValueError):
            shape.check_support((0, 0))
        with pytest.raises(IndexError):
            shape.check_support((3,))


class TestOperators:
    def test_hermitian_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            HermitianOperator(RegisterShape.qubits(1), np.array([[0, 1], [0, 0]]))

    def test_real_kept_real(self):
        op = HermitianOperator(RegisterShape.qubits(1), X)
        assert op.entries.dtype.kind == "f"

    def test_projector_checks(self):
        with pytest.raises(ValueError):
            Projector((0,), np.diag([1.0, 0.5]))
        p = Projector((0, 1), np.diag([0, 0, 0, 1.0]))
        assert p.rank == 1

    def test_state_normalisation(self):
        shape = RegisterShape.qubits(2)
        with pytest.raises(ValueError):
            StateVector(shape, np.ones(4))
        s = StateVector.normalized(shape, np.ones(4))
        assert np.isclose(np.linalg.norm(s.amplitudes), 1)

    def test_uniform_product_qutrit(self):
        s = StateVector.uniform_product(RegisterShape.uniform(2, 3))
        assert np.allclose(s.amplitudes, 1 / 3)

    def test_mixture_weights(self):
        with pytest.raises(ValueError):
            ClassicalMixture("k", [0.5, 0.4])
        with pytest.raises(ValueError):
            ClassicalMixture("k", [1.2, -0.2])


class TestEmbed:
    def test_identity_on_site0(self):
        op = embed(Projector((0,), np.eye(2)), RegisterShape.qubits(2))
        assert np.allclose(op.entries, np.eye(4))

    def test_11_on_three_qubits(self):
        op = embed(Projector((0, 1), np.diag([0, 0, 0, 1.0])), RegisterShape.qubits(3))
        assert np.allclose(np.diag(op.entries), [0, 0, 0, 0, 0, 0, 1, 1])
        assert np.count_nonzero(op.entries - np.diag(np.diag(op.entries))) == 0

    def test_zz_on_sites_0_2(self):
        m = (np.eye(4) + np.kron(Z, Z)) / 2
        op = embed(Projector((0, 2), m), RegisterShape.qubits(3))
        assert np.allclose(op.entries, kron_all([Z, np.eye(2), Z]) / 2 + np.eye(8) / 2)
        assert np.allclose(op.entries, brute_embed(m, (0, 2), (2, 2, 2)))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(2, 3), min_size=2, max_size=4), st.data())
    def test_matches_brute_force(self, dims, data):
        n = len(dims)
        k = data.draw(st.integers(1, min(2, n)))
        support = tuple(data.draw(st.permutations(range(n)))[:k])
        rng = make_stream(data.draw(st.integers(0, 10 ** 6)))
        m = random_hermitian(int(np.prod([dims[s] for s in support])), rng)
        op = embed(LocalTerm(support, m), RegisterShape(tuple(dims)))
        assert np.allclose(op.entries, brute_embed(m, support, dims))


class TestSpectral:
    def test_diagonal(self):
        es = spectral(HermitianOperator(RegisterShape((3,)), np.diag([3.0, 1.0, 2.0])))
        assert np.allclose(es.energies, [1, 2, 3])
        assert np.allclose(np.abs(es.dense_basis()), np.eye(3)[:, [1, 2, 0]])

    def test_pauli_x(self):
        es = spectral(HermitianOperator(RegisterShape.qubits(1), X))
        assert np.allclose(es.energies, [-1, 1])
        v = es.dense_basis()
        assert np.isclose(abs(np.vdot(v[:, 0], [1, -1])) / np.sqrt(2), 1)
        assert np.isclose(abs(np.vdot(v[:, 1], [1, 1])) / np.sqrt(2), 1)

    def test_maxcut_cycle(self):
        from altham.models import Graph, maxcut_hamiltonian

        es = spectral(maxcut_hamiltonian(Graph.cycle(4)).to_dense())
        assert np.isclose(es.energies[0], 0)

    @pytest.mark.parametrize("d", [7, 64, 200, 512])
    def test_reconstruction(self, d):
        rng = make_stream(d)
        h = random_hermitian(d, rng)
        es = spectral(HermitianOperator(RegisterShape((d,)), h))
        v = es.dense_basis()
        rec = (v * es.energies) @ v.conj().T
        assert np.linalg.norm(rec - h) / np.linalg.norm(h) < 1e-8
        assert np.linalg.norm(v.conj().T @ v - np.eye(d)) < 1e-8

    def test_from_diagonal_labels(self):
        es = EigenSystem.from_diagonal([2.0, 0.0, 1.0])
        assert np.allclose(es.energies, [0, 1, 2])
        assert list(es.labels) == [1, 2, 0]
        p = es.probabilities(np.array([0.6, 0.8, 0.0]))
        assert np.allclose(p, [0.64, 0, 0.36])

    def test_transition_between_bases(self):
        rng = make_stream(3)
        shape = RegisterShape.qubits(3)
        a = spectral(HermitianOperator(shape, random_hermitian(8, rng)))
        b = spectral(HermitianOperator(shape, random_hermitian(8, rng)))
        w = rng.dirichlet(np.ones(8))
        va, vb = a.dense_basis(), b.dense_basis()
        expected = np.einsum("a,ba->b", w, np.abs(vb.conj().T @ va) ** 2)
        assert np.allclose(a.transition(w, b), expected)
        d = EigenSystem.from_diagonal(rng.random(8), shape)
        vd = d.dense_basis()
        assert np.allclose(a.transition(w, d), np.einsum("a,ba->b", w, np.abs(vd.T @ va) ** 2))
        assert np.allclose(d.transition(w, a), np.einsum("a,ba->b", w, np.abs(va.conj().T @ vd) ** 2))


class TestMeasurement:
    def test_eigenstate(self):
        es = EigenSystem.from_diagonal(np.arange(16.0))
        state = StateVector.basis(RegisterShape.qubits(4), 7)
        rng = make_stream(0)
        assert all(measure_in_basis(state, es, rng)[0] == 7 for _ in range(50))

    def test_plus_in_z(self):
        es = EigenSystem.from_diagonal([0.0, 1.0])
        state = StateVector.uniform_product(RegisterShape.qubits(1))
        rng = make_stream(1)
        n = 10 ** 4
        hits = sum(measure_in_basis(state, es, rng)[0] == 0 for _ in range(n))
        assert abs(hits / n - 0.5) < 3 * np.sqrt(0.25 / n)

    def test_three_dim_frequencies(self):
        rng = make_stream(2)
        shape = RegisterShape((3,))
        state = StateVector.haar(shape, rng)
        es = EigenSystem.from_diagonal([0.0, 1.0, 2.0], shape)
        n = 10 ** 5
        from altham.qop import sample_indices

        counts = np.bincount(sample_indices(es.probabilities(state), rng, n), minlength=3)
        p = np.abs(state.amplitudes) ** 2
        assert np.all(np.abs(counts / n - p) <= 3 * np.sqrt(p * (1 - p) / n))

    @pytest.mark.parametrize("d", [2, 5, 16])
    def test_chi_square(self, d):
        rng = make_stream(d + 100)
        shape = RegisterShape((d,))
        op = HermitianOperator(shape, random_hermitian(d, rng))
        es = spectral(op)
        state = StateVector.haar(shape, rng)
        n = 10 ** 4
        draws = [measure_in_basis(state, es, rng)[0] for _ in range(n)]
        p = es.probabilities(state)
        counts = np.bincount(draws, minlength=d)
        keep = p > 0
        assert scipy.stats.chisquare(counts[keep], p[keep] * n).pvalue > 1e-3


class TestPartialTrace:
    def test_product_state(self):
        state = StateVector.basis(RegisterShape.qubits(2), 1)  # |01>
        assert np.allclose(partial_trace_to_support(state, [1]), np.diag([0, 1]))

    def test_bell(self):
        state = StateVector.normalized(RegisterShape.qubits(2), [1, 0, 0, 1])
        assert np.allclose(partial_trace_to_support(state, [0]), np.eye(2) / 2)

    def test_random_three_qubits(self):
        rng = make_stream(5)
        state = StateVector.haar(RegisterShape.qubits(3), rng)
        t = state.amplitudes.reshape(2, 2, 2)
        oracle = np.zeros((4, 4), dtype=complex)
        for a, c, a2, c2 in itertools.product(range(2), repeat=4):
            oracle[2 * a + c, 2 * a2 + c2] = sum(t[a, b, c] * np.conj(t[a2, b, c2]) for b in range(2))
        assert np.allclose(partial_trace_to_support(state, [0, 2]), oracle)
        rho = state.density_matrix()
        assert np.allclose(partial_trace_to_support(rho, [0, 2], state.shape), oracle)


class TestHaarInRange:
    def test_rank_one(self):
        p = Projector((0,), np.diag([0, 1.0]))
        phi = haar_in_range(p, make_stream(0))
        assert np.allclose(phi.matrix, p.matrix)

    def test_moments(self):
        rng = make_stream(7)
        vecs = np.array([[1, 0, 0, 0], [0, 1, 1, 0]], dtype=float)
        vecs[1] /= np.sqrt(2)
        p = Projector.from_vectors((0, 1), vecs)
        d = p.rank
        v = haar_vectors_in_range(p, rng, 10 ** 5)
        first = np.einsum("si,sj->ij", v, v.conj()) / v.shape[0]
        assert np.max(np.abs(first - p.matrix / d)) < 5e-3
        vv = np.einsum("si,sj->sij", v, v).reshape(v.shape[0], -1)
        second = np.einsum("si,sj->ij", vv, vv.conj()) / v.shape[0]
        pp = np.kron(p.matrix, p.matrix)
        swap = np.eye(16).reshape(4, 4, 4, 4).transpose(0, 1, 3, 2).reshape(16, 16)
        expected = pp @ (np.eye(16) + swap) @ pp / (d * (d + 1))
        assert np.max(np.abs(second - expected)) < 5e-3

    def test_inside_range(self):
        p = Projector.from_vectors((0,), np.eye(3)[:2])
        phi = haar_in_range(p, make_stream(1))
        assert np.allclose(p.matrix @ phi.matrix, phi.matrix)


class TestOperatorBasis:
    def test_qubit(self):
        ops = operator_basis((2,))
        mats = [o.entries for o in ops]
        assert len(mats) == 4
        for ref in (np.eye(2), X, np.array([[0, -1j], [1j, 0]]), Z):
            assert any(np.allclose(m, ref) for m in mats)

    def test_two_qubits_orthogonal(self):
        mats = [o.entries for o in operator_basis((2, 2))]
        assert len(mats) == 16
        gram = np.array([[np.trace(a.conj().T @ b) for b in mats] for a in mats])
        assert np.allclose(gram - np.diag(np.diag(gram)), 0)

    def test_qutrit_pair_complete(self):
        mats = [o.entries for o in operator_basis((3, 3))]
        assert len(mats) == 81
        h = random_hermitian(9, make_stream(9))
        rec = sum(np.trace(m.conj().T @ h) / np.trace(m.conj().T @ m) * m for m in mats)
        assert np.max(np.abs(rec - h)) < 1e-10


class TestRng:
    def test_derive_is_order_independent(self):
        a = derive(3, 1, 2).random(4)
        derive(3, 1, 1).random(100)
        assert np.array_equal(a, derive(3, 1, 2).random(4))
        assert not np.array_equal(a, derive(3, 1, 3).random(4))

    def test_split(self):
        r = make_stream(0)
        a, b = split(r, 2)
        assert not np.array_equal(a.random(3), b.random(3))

    def test_settings_override_restores(self):
        before = SETTINGS.max_dim
        with override(max_dim=4):
            assert SETTINGS.max_dim == 4
        assert SETTINGS.max_dim == before
        with pytest.raises(KeyError):
            with override(nope=1):
                pass
