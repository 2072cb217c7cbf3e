import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from altham.altered import (
    LocalAlteration,
    SparsityPattern,
    altered_hamiltonian,
    assemble_altered,
    assemble_sparse_altered,
    pattern_columns,
    pattern_coordinates,
    sample_local_alteration,
    sample_sparse_alteration,
    sparse_altered_matrix,
    write_alteration_csv,
)
from altham.models import (
    DiagonalLandscape,
    Graph,
    aklt_hamiltonian,
    grover_hamiltonian,
    maxcut_hamiltonian,
    qmc_hamiltonian,
    random_regular_graph,
    well_landscape,
)
from altham.qop import EigenSystem, Projector, RegisterShape, StateVector, embed, spectral
from altham.rng import make_stream


def brute_altered(h, a):
    total = np.zeros((h.shape.total_dim,) * 2, dtype=complex)
    for pi, phi in zip(h.terms, a.phis):
        total += embed(pi, h.shape).entries + embed(phi, h.shape).entries
    return total


class TestLocalFamily:
    def test_rank_one_terms_double(self):
        h = maxcut_hamiltonian(Graph(2, ((0, 1),), 1))
        h1 = type(h)(h.shape, (Projector((0, 1), np.diag([0, 0, 0, 1.0])),))
        a = sample_local_alteration(h1, make_stream(0))
        assert np.allclose(assemble_altered(h1, a).entries, 2 * h1.to_dense().entries)

    def test_matches_brute_force(self):
        h = qmc_hamiltonian(random_regular_graph(6, 3, make_stream(1)))
        a = sample_local_alteration(h, make_stream(2))
        a.check_inside(h)
        assert np.allclose(assemble_altered(h, a).entries, brute_altered(h, a))

    def test_psd_and_sandwich(self):
        rng = make_stream(3)
        h = qmc_hamiltonian(random_regular_graph(6, 3, rng))
        hd = h.to_dense().entries
        for _ in range(5):
            ha = assemble_altered(h, sample_local_alteration(h, rng)).entries
            assert np.linalg.eigvalsh(ha).min() >= -1e-8
            assert np.linalg.eigvalsh(ha - hd).min() >= -1e-8
            assert np.linalg.eigvalsh(2 * hd - ha).min() >= -1e-8

    def test_energy_between_h_and_2h(self):
        rng = make_stream(4)
        h = maxcut_hamiltonian(random_regular_graph(6, 3, rng))
        ha = assemble_altered(h, sample_local_alteration(h, rng)).entries
        for _ in range(10):
            psi = StateVector.haar(h.shape, rng).amplitudes
            e = np.vdot(psi, h.apply(psi)).real
            ea = np.vdot(psi, ha @ psi).real
            assert e - 1e-10 <= ea <= 2 * e + 1e-10

    def test_empty(self):
        from altham.models import LocalHamiltonian

        h = LocalHamiltonian(RegisterShape.qubits(2), ())
        assert np.allclose(assemble_altered(h, LocalAlteration(())).entries, 0)

    def test_aklt_ground_space_preserved(self):
        rng = make_stream(5)
        h = aklt_hamiltonian(5)
        es = spectral(h.to_dense())
        ground = es.columns(np.flatnonzero(np.abs(es.energies) < 1e-8))
        assert ground.shape[1] == 4
        for _ in range(100):
            ha = altered_hamiltonian(h, sample_local_alteration(h, rng))
            assert np.max(np.abs(ha.apply(ground))) < 1e-8

    def test_rejects_outside_range(self):
        h = maxcut_hamiltonian(Graph(2, ((0, 1),), 1))
        bad = LocalAlteration((Projector((0, 1), np.diag([0, 1.0, 0, 0])),))
        with pytest.raises(ValueError):
            bad.check_inside(h)

    def test_rejects_non_projector_terms(self):
        h = qmc_hamiltonian(Graph(2, ((0, 1),), 1), term_form="literal")
        with pytest.raises(ValueError):
            sample_local_alteration(h, make_stream(0))


class TestPatterns:
    def test_hamming_columns(self):
        p = SparsityPattern("hamming", 3)
        assert pattern_columns(p, 0) == [1, 2, 4]
        _, _, t = pattern_coordinates(p)
        assert np.all(t == 3)

    def test_band_boundary(self):
        p = SparsityPattern("band", 12, t=2)
        assert pattern_columns(p, 0) == [0, 1, 2]
        _, _, t = pattern_coordinates(p)
        assert t[0] == 3
        assert t[100] == 5
        assert t.min() == 3 and t.max() == 5

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 7), st.integers(1, 6))
    def test_coordinates_match_columns(self, n, t):
        for kind in ("band", "hamming"):
            p = SparsityPattern(kind, n, t)
            a, b, tc = pattern_coordinates(p)
            for beta in range(p.dim):
                assert list(a[b == beta]) == pattern_columns(p, beta)
                assert tc[beta] == len(pattern_columns(p, beta))
            if kind == "band":
                assert tc.min() >= min(t + 1, p.dim) and tc.max() <= 2 * t + 1
            else:
                assert np.all(tc == n)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            SparsityPattern("ring", 3)


class TestSparseFamily:
    def test_zero_landscape(self):
        d = DiagonalLandscape(3, np.zeros(8))
        s = sample_sparse_alteration(d, SparsityPattern("hamming", 3), make_stream(0))
        assert s.f.nnz == 0 or np.allclose(s.f.toarray(), 0)
        assert np.allclose(assemble_sparse_altered(d, s).entries, 0)

    def test_f_second_moment(self):
        d = well_landscape(4, 2, make_stream(1))
        p = SparsityPattern("band", 4, 2)
        rng = make_stream(2)
        n = 10 ** 4
        acc = np.zeros((16, 16))
        for _ in range(n):
            acc += sample_sparse_alteration(d, p, rng).f.toarray() ** 2
        a, b, t = pattern_coordinates(p)
        expected = d.energies[b] / t[b]
        got = acc[a, b] / n
        ok = expected > 0
        assert np.all(np.abs(got[ok] / expected[ok] - 1) < 0.05)
        assert np.all(got[~ok] == 0)

    def test_mean_w_dagger_w(self):
        d = well_landscape(3, 1, make_stream(3))
        p = SparsityPattern("hamming", 3)
        rng = make_stream(4)
        draws = np.array([sample_sparse_alteration(d, p, rng).w_dagger_w().toarray() for _ in range(1000)])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        dev = np.abs(mean - np.diag(d.energies))
        assert np.all(dev <= 3 * se + 1e-12)

    def test_f_zero_gives_h(self):
        d = well_landscape(3, 1, make_stream(5))
        s = sample_sparse_alteration(d, SparsityPattern("hamming", 3), make_stream(6))
        zero = type(s)(s.pattern, s.f * 0, s.t_col)
        assert np.allclose(assemble_sparse_altered(d, zero).entries, np.diag(d.energies))

    @pytest.mark.parametrize("kind", ["band", "hamming"])
    def test_claim1_and_psd(self, kind):
        d = well_landscape(6, 5, make_stream(7))
        p = SparsityPattern(kind, 6, 3)
        rng = make_stream(8)
        for _ in range(20):
            s = sample_sparse_alteration(d, p, rng)
            m = assemble_sparse_altered(d, s).entries
            zero = d.ground_indices()
            assert np.all(m[:, zero] == 0)
            assert np.linalg.eigvalsh(s.w_dagger_w().toarray()).min() >= -1e-8

    def test_eigensystem_base(self):
        rng = make_stream(9)
        h = aklt_hamiltonian(4)
        es = spectral(h.to_dense())
        s = sample_sparse_alteration(es, SparsityPattern("band", 4, 2, dim=81), rng)
        m = assemble_sparse_altered(es, s).entries
        ground = es.columns(np.flatnonzero(np.abs(es.energies) < 1e-8))
        assert np.max(np.abs(m @ ground)) < 1e-8
        v = es.dense_basis()
        label = v.conj().T @ m @ v
        assert np.allclose(label, sparse_altered_matrix(es, s).toarray(), atol=1e-9)

    def test_grover_ground(self):
        d = grover_hamiltonian(5, 9)
        s = sample_sparse_alteration(d, SparsityPattern("hamming", 5), make_stream(10))
        m = assemble_sparse_altered(d, s).entries
        assert np.all(m[:, 9] == 0) and np.all(m[9, :] == 0)

    def test_negative_energy_rejected(self):
        es = EigenSystem.from_diagonal([-1.0, 0.0])
        with pytest.raises(ValueError):
            sample_sparse_alteration(es, SparsityPattern("band", 1, 1), make_stream(0))

    def test_csv(self, tmp_path):
        d = well_landscape(3, 1, make_stream(11))
        s = sample_sparse_alteration(d, SparsityPattern("hamming", 3), make_stream(12))
        write_alteration_csv(s, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert lines[0] == "alpha,beta,value"
        assert len(lines) == 1 + s.f.nnz
