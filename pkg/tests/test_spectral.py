import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsign.graph import Graph, build_laplacian, random_sensor_graph
from gsign.spectral import (
    EigenConvergenceError,
    SamplingError,
    SamplingSet,
    cached_eigendecompose,
    eigendecompose,
    gft,
    greedy_sampling,
    igft,
    jacobi_eigh,
    lowpass_bandlimit,
    make_bandlimit,
)


def smin(U_F, S):
    return np.linalg.svd(U_F[list(S)], compute_uv=False)[-1]


@pytest.fixture(scope="module")
def basis20():
    return eigendecompose(build_laplacian(random_sensor_graph(20, 3)))


class TestJacobi:
    def test_path3_characteristic_roots(self):
        # det(L - t I) = -t (t - 1)(t - 3)
        L = build_laplacian(Graph.from_edges(3, [(0, 1, 1), (1, 2, 1)]))
        w, _ = jacobi_eigh(L)
        np.testing.assert_allclose(w, [0.0, 1.0, 3.0], atol=1e-12)

    def test_zero_matrix(self):
        w, V = jacobi_eigh(np.zeros((3, 3)))
        np.testing.assert_array_equal(w, 0.0)
        np.testing.assert_allclose(V.T @ V, np.eye(3))

    def test_random_psd_reconstruction(self):
        X = np.random.default_rng(0).standard_normal((6, 6))
        A = X @ X.T
        w, V = jacobi_eigh(A)
        assert np.linalg.norm(V @ np.diag(w) @ V.T - A) <= 1e-8
        np.testing.assert_allclose(w, np.linalg.eigvalsh(A), rtol=1e-10)

    def test_clustered_spectrum_converges(self):
        # eigenvalues agreeing to ~1e-5 once defeated the stopping test
        rng = np.random.default_rng(1)
        Q, _ = np.linalg.qr(rng.standard_normal((20, 20)))
        lam = np.concatenate([[-0.4, -0.399996, -0.39996], rng.uniform(-0.4, 0.5, 17)])
        A = Q @ np.diag(lam) @ Q.T
        A = 0.5 * (A + A.T)
        w, V = jacobi_eigh(A)
        np.testing.assert_allclose(w, np.sort(lam), atol=1e-12)
        assert np.linalg.norm(V.T @ V - np.eye(20)) <= 1e-12

    def test_sweep_cap_raises(self):
        A = np.random.default_rng(2).standard_normal((8, 8))
        with pytest.raises(EigenConvergenceError):
            jacobi_eigh(A + A.T, max_sweeps=1)

    def test_odd_and_one(self):
        w, V = jacobi_eigh([[2.0]])
        assert w[0] == 2.0 and V[0, 0] == 1.0
        A = np.random.default_rng(5).standard_normal((7, 7))
        A = A + A.T
        np.testing.assert_allclose(jacobi_eigh(A)[0], np.linalg.eigvalsh(A), atol=1e-12)

    def test_nonsquare(self):
        with pytest.raises(ValueError):
            jacobi_eigh(np.zeros((2, 3)))


class TestEigendecompose:
    def test_invariants(self, basis20):
        U, lam = basis20.U, basis20.lambdas
        L = build_laplacian(random_sensor_graph(20, 3))
        assert np.linalg.norm(U.T @ U - np.eye(20)) <= 1e-9
        assert np.linalg.norm(U @ np.diag(lam) @ U.T - L) <= 1e-8 * np.linalg.norm(L)
        assert lam[0] >= -1e-9 and np.all(np.diff(lam) >= 0)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            eigendecompose([[0.0, 1.0], [0.0, 0.0]])

    def test_cache_round_trip(self, tmp_path):
        L = build_laplacian(random_sensor_graph(15, 0))
        first = cached_eigendecompose(L, tmp_path)
        files = list(tmp_path.glob("spectral-*.npz"))
        assert len(files) == 1
        second = cached_eigendecompose(L, tmp_path)
        np.testing.assert_array_equal(first.U, second.U)
        np.testing.assert_array_equal(first.lambdas, second.lambdas)
        other = build_laplacian(random_sensor_graph(15, 1))
        cached_eigendecompose(other, tmp_path)
        assert len(list(tmp_path.glob("spectral-*.npz"))) == 2


class TestTransforms:
    def test_gft_of_eigenvector(self, basis20):
        for i in (0, 7, 19):
            e = np.zeros(20)
            e[i] = 1.0
            np.testing.assert_allclose(gft(basis20, basis20.U[:, i]), e, atol=1e-9)
            np.testing.assert_allclose(igft(basis20, e), basis20.U[:, i], atol=1e-15)

    def test_zero(self, basis20):
        np.testing.assert_array_equal(gft(basis20, np.zeros(20)), 0.0)

    def test_round_trip_and_parseval(self, basis20):
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = rng.standard_normal(20)
            s = gft(basis20, x)
            assert abs(np.linalg.norm(s) - np.linalg.norm(x)) <= 1e-9
            np.testing.assert_allclose(igft(basis20, s), x, atol=1e-9)

    def test_length_mismatch(self, basis20):
        with pytest.raises(ValueError):
            gft(basis20, np.zeros(19))
        with pytest.raises(ValueError):
            igft(basis20, np.zeros(21))

    def test_band_supported_spectrum_is_fixed_by_B(self, basis20):
        band = make_bandlimit(basis20, [0, 2, 5])
        s = np.zeros(20)
        s[[0, 2, 5]] = [1.0, -2.0, 0.5]
        x = igft(basis20, s)
        np.testing.assert_allclose(band.B @ x, x, atol=1e-9)


class TestBandlimit:
    def test_full_band_is_identity(self, basis20):
        np.testing.assert_allclose(make_bandlimit(basis20, range(20)).B, np.eye(20), atol=1e-10)

    def test_empty_band_is_zero(self, basis20):
        band = make_bandlimit(basis20, [])
        assert band.size == 0
        np.testing.assert_array_equal(band.B, 0.0)

    def test_annihilates_out_of_band(self):
        basis = eigendecompose(build_laplacian(random_sensor_graph(5, 0)))
        band = make_bandlimit(basis, [0, 3])
        for j in (1, 2, 4):
            np.testing.assert_allclose(band.B @ basis.U[:, j], 0.0, atol=1e-9)

    def test_out_of_range(self, basis20):
        with pytest.raises(ValueError):
            make_bandlimit(basis20, [0, 20])

    @settings(max_examples=40, deadline=None)
    @given(st.sets(st.integers(0, 19), max_size=20))
    def test_projector_invariants(self, basis20, F):
        band = make_bandlimit(basis20, sorted(F))
        B = band.B
        assert np.linalg.norm(B @ B - B) <= 1e-9
        np.testing.assert_array_equal(B, B.T)
        assert abs(np.trace(B) - len(F)) <= 1e-9
        np.testing.assert_allclose(B, band.U_F @ band.U_F.T, atol=1e-10)

    def test_lowpass(self, basis20):
        band = lowpass_bandlimit(basis20, 4)
        np.testing.assert_array_equal(band.freqs, [0, 1, 2, 3])


class TestSamplingSet:
    def test_selector(self):
        S = SamplingSet([3, 1, 3], 5)
        np.testing.assert_array_equal(S.nodes, [1, 3])
        D = S.D
        np.testing.assert_array_equal(D @ D, D)
        np.testing.assert_array_equal(D, D.T)
        assert S.size == 2

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            SamplingSet([5], 5)


class TestGreedy:
    def test_all_nodes(self, basis20):
        U_F = lowpass_bandlimit(basis20, 5).U_F
        np.testing.assert_array_equal(greedy_sampling(U_F, 20).nodes, np.arange(20))

    def test_singleton_scan(self, basis20):
        U_F = basis20.U[:, [1]]
        expected = int(np.argmax(np.abs(U_F[:, 0])))
        np.testing.assert_array_equal(greedy_sampling(U_F, 1).nodes, [expected])

    def test_n6_against_exhaustive(self):
        basis = eigendecompose(build_laplacian(random_sensor_graph(6, 2)))
        U_F = basis.U[:, :2]
        best = max(smin(U_F, S) for S in itertools.combinations(range(6), 3))
        got = smin(U_F, greedy_sampling(U_F, 3).nodes)
        assert 0.5 * best <= got <= best + 1e-12

    def test_gram_nonsingular(self, basis20):
        for f in (1, 3, 8):
            U_F = lowpass_bandlimit(basis20, f).U_F
            S = greedy_sampling(U_F, f + 2)
            G = U_F.T @ S.D @ U_F
            assert np.linalg.eigvalsh(G)[0] > 0

    def test_volume_phase_picks_largest_row_first(self, basis20):
        U_F = lowpass_bandlimit(basis20, 4).U_F
        first = greedy_sampling(U_F, 4).nodes
        norms = np.sum(U_F**2, axis=1)
        assert int(np.argmax(norms)) in first

    def test_unrecoverable(self):
        # only node 0 sees the band at all: rank 1 < |F|
        U_F = np.zeros((4, 2))
        U_F[0, 0] = 1.0
        with pytest.raises(SamplingError):
            greedy_sampling(U_F, 2)
        # rank-deficient rows caught during the volume phase
        with pytest.raises(SamplingError):
            greedy_sampling(np.zeros((4, 3)), 3)

    def test_bad_size(self, basis20):
        U_F = lowpass_bandlimit(basis20, 3).U_F
        with pytest.raises(ValueError):
            greedy_sampling(U_F, 2)
        with pytest.raises(ValueError):
            greedy_sampling(U_F, 21)
        with pytest.raises(ValueError):
            greedy_sampling(np.zeros((5, 0)), 1)
