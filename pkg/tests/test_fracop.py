import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraccal import fracop as fo
from fraccal.core import Geometry, Metric, Region
from fraccal.eigen import analytic_basis, assemble_stiffness, discrete_basis

G1 = Geometry.interval(1.0, 127)
B1 = discrete_basis(Metric.identity(G1))
BA = analytic_basis(Geometry.interval(np.pi, 127), 31)
GC = Geometry.circle(2 * np.pi, 64)
BC = discrete_basis(Metric.identity(GC))
O1 = Region.from_box(G1, [(0.625, 0.875)], "O")


def l2(u, g):
    return np.sqrt(g.cell_volume * np.sum(u * u))


class TestAnalysis:
    def test_mode(self):
        c = fo.analyze(BA.vectors[:, 2], BA).values
        assert np.allclose(c, np.eye(31)[2], atol=1e-8)

    def test_zero(self):
        assert not fo.analyze(np.zeros(127), BA).values.any()

    def test_roundtrip(self):
        u = 2 * BA.vectors[:, 0] - BA.vectors[:, 1]
        back = fo.synthesize(fo.analyze(u, BA))
        assert l2(back - u, BA.geometry) <= 1e-8 * l2(u, BA.geometry)

    def test_wrong_grid(self):
        with pytest.raises(ValueError):
            fo.analyze(np.zeros(10), BA)


class TestFractional:
    @pytest.mark.parametrize("s", [-1.0, -0.5, 0.3, 1.0])
    def test_eigenfunction(self, s):
        u = fo.apply_frac(s, BA.vectors[:, 4], BA)
        assert np.allclose(u, BA.eigenvalues[4] ** s * BA.vectors[:, 4], atol=1e-10)

    def test_identity(self, rng):
        u = BA.vectors @ rng.standard_normal(31)
        assert np.allclose(fo.apply_frac(0.0, u, BA), u, atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
    def test_semigroup(self, s, t):
        u = B1.vectors @ np.linspace(1, -1, B1.size)
        a = fo.apply_frac(s, fo.apply_frac(t, u, B1), B1)
        b = fo.apply_frac(s + t, u, B1)
        assert l2(a - b, G1) <= 1e-8 * l2(b, G1)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95))
    def test_inverse(self, s):
        f = B1.vectors @ np.cos(np.arange(B1.size))
        assert l2(fo.apply_frac(s, fo.solve_sts(s, f, B1), B1) - f, G1) <= 1e-8 * l2(f, G1)

    def test_sts_mode(self):
        u = fo.solve_sts(0.5, BA.vectors[:, 0], BA)
        assert np.allclose(u, BA.vectors[:, 0], atol=1e-12)

    def test_poisson_against_direct_solve(self):
        m = Metric.from_function(G1, lambda x: 1 + 0.3 * np.sin(4 * x), 0.5)
        b = discrete_basis(m)
        f = np.exp(-200 * (G1.nodes()[:, 0] - 0.7) ** 2)
        direct = np.linalg.solve(assemble_stiffness(m), f)
        assert l2(fo.solve_sts(1.0, f, b) - direct, G1) <= 1e-9 * l2(direct, G1)

    def test_circle_cosine(self):
        x = GC.nodes()[:, 0]
        assert np.allclose(fo.solve_sts(0.5, np.cos(x), analytic_basis(GC, 8, mean_zero=True)), np.cos(x), atol=1e-12)

    def test_circle_rejects_mean(self):
        with pytest.raises(ValueError, match="zero mean"):
            fo.solve_sts(0.5, np.ones(64), BC)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.05, 0.95), st.integers(0, 2**31))
    def test_norm_identity(self, s, seed):
        f = B1.vectors @ np.random.default_rng(seed).uniform(-1, 1, B1.size)
        u = fo.solve_sts(s, f, B1)
        a = fo.sobolev_norm(s, fo.analyze(u, B1))
        b = fo.sobolev_norm(-s, fo.analyze(f, B1))
        assert a == pytest.approx(b, rel=1e-10)


class TestSobolev:
    def test_unit(self):
        c = fo.SpectralCoeffs(BA, np.eye(31)[3])
        assert fo.sobolev_norm(0.6, c) == pytest.approx(BA.eigenvalues[3] ** 0.3, rel=1e-14)

    def test_zero_order(self, rng):
        v = rng.standard_normal(31)
        assert fo.sobolev_norm(0.0, fo.SpectralCoeffs(BA, v)) == pytest.approx(np.linalg.norm(v), rel=1e-14)

    def test_circle_weights(self):
        assert np.allclose(fo.sobolev_weights(BC, 0.5), np.sqrt(1 + BC.eigenvalues))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
    def test_interpolation(self, seed, r0, r1, t):
        c = fo.SpectralCoeffs(BA, np.random.default_rng(seed).standard_normal(31))
        r = (1 - t) * r0 + t * r1
        rhs = fo.sobolev_norm(r0, c) ** (1 - t) * fo.sobolev_norm(r1, c) ** t
        assert fo.sobolev_norm(r, c) <= rhs * (1 + 1e-12)


class TestDictionary:
    def test_support_and_orthonormal(self):
        d = fo.source_dictionary(O1, 12)
        assert not d.elements[~O1.mask()].any()
        G = G1.cell_volume * d.elements.T @ d.elements
        assert np.allclose(G, np.eye(12), atol=1e-12)

    def test_circle_mean_zero(self):
        R = Region.from_box(GC, [(1.0, 3.0)], "O")
        d = fo.source_dictionary(R, 4, mean_zero=True)
        assert np.max(np.abs(d.elements.sum(axis=0))) <= 1e-12
        fo.solve_sts(0.5, d.elements, BC)

    def test_2d(self):
        g = Geometry.rectangle((1, 1), (15, 15))
        R = Region.from_box(g, [(0.25, 0.75), (0.25, 0.75)], "O")
        d = fo.source_dictionary(R, 5)
        assert d.modes[:3] == ((1, 1), (1, 2), (2, 1))
        assert np.allclose(g.cell_volume * d.elements.T @ d.elements, np.eye(5), atol=1e-12)

    def test_too_many(self):
        with pytest.raises(ValueError):
            fo.source_dictionary(O1, 40)

    def test_trace_basis_orthonormal(self):
        psi, nu = fo.trace_basis(O1, 12)
        assert np.allclose(G1.cell_volume * psi.T @ psi, np.eye(12), atol=1e-12)
        assert nu[0] == 0 and np.all(np.diff(nu) > 0)

    def test_gram_well_conditioned(self):
        G = fo.dictionary_gram(fo.source_dictionary(O1, 12), B1, 0.5)
        assert np.isfinite(np.linalg.cond(G)) and np.linalg.eigvalsh(G)[0] > 0


class TestStsMatrix:
    d = fo.source_dictionary(O1, 12)

    def test_identical_metrics(self):
        a = fo.build_sts_matrix(0.5, B1, self.d)
        b = fo.build_sts_matrix(0.5, discrete_basis(Metric.identity(G1)), self.d)
        assert fo.operator_norm_diff(a, b) == 0

    def test_symmetry_dict_target(self):
        M = fo.build_sts_matrix(0.5, B1, self.d, target="dict").entries
        assert np.max(np.abs(M - M.T)) <= 1e-8 * np.abs(M).max()
        # direct inner products (L^{-s} d_i, d_j) on a 5 x 5 block
        u = fo.solve_sts(0.5, self.d.elements[:, :5], B1)
        direct = G1.cell_volume * self.d.elements[:, :5].T @ u
        assert np.allclose(M[:5, :5], direct, atol=1e-14)

    def test_single_mode(self):
        R = Region.from_box(BA.geometry, [(0.3, 2.9)], "O")
        d = fo.SourceDict(R, BA.vectors[:, :1] * R.mask()[:, None], BA.eigenvalues[:1], (1,))
        M = fo.build_sts_matrix(0.5, BA.truncated(BA.size), d, target="dict").entries
        dd = d.elements[:, 0]
        u = fo.apply_frac(-0.5, dd, BA)
        assert M[0, 0] == pytest.approx(BA.geometry.cell_volume * dd @ u, rel=1e-14)

    def test_basis_guard(self):
        with pytest.raises(ValueError, match="8J"):
            fo.build_sts_matrix(0.5, B1.truncated(40), self.d)


class TestSVD:
    def test_identity(self):
        s = fo.svd(fo.OperatorMatrix(np.eye(4), np.ones(4), np.ones(4)))
        assert np.allclose(s.sigma, 1)

    def test_diag(self):
        s = fo.svd(fo.OperatorMatrix(np.diag([3.0, 1.0, 2.0]), np.ones(3), np.ones(3)))
        assert np.allclose(s.sigma, [3, 2, 1])

    def test_normal_equations_oracle(self, rng, backend):
        from fraccal.eigen import symmetric_eig

        M = rng.standard_normal((6, 4))
        s = fo.svd(fo.OperatorMatrix(M, np.ones(4), np.ones(6)))
        w, _ = symmetric_eig(M.T @ M)
        assert np.allclose(s.sigma, np.sqrt(w[::-1]), atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))
    def test_weighted_triplets(self, m, n, seed):
        r = np.random.default_rng(seed)
        M = r.standard_normal((m, n))
        A = r.standard_normal((n, n))
        Gs = A @ A.T + n * np.eye(n)
        Gt = r.uniform(0.5, 2, m)
        s = fo.svd(fo.OperatorMatrix(M, Gs, Gt))
        k = min(m, n)
        assert np.all(np.diff(s.sigma) <= 1e-14 * s.sigma[0])
        res = M @ s.right[:, :k] - s.left[:, :k] * s.sigma[:k]
        assert np.max(np.abs(res)) <= 1e-8 * max(s.sigma[0], 1e-300) * np.sqrt(np.max(Gt) / np.min(Gt)) + 1e-14
        kr = s.rank
        assert np.allclose(s.right[:, :kr].T @ Gs @ s.right[:, :kr], np.eye(kr), atol=1e-8)
        assert np.allclose(s.left[:, :kr].T @ (Gt[:, None] * s.left[:, :kr]), np.eye(kr), atol=1e-8)
        # weighted values equal numpy's on the Cholesky-scaled matrix
        L = np.linalg.cholesky(Gs)
        ref = np.linalg.svd(np.sqrt(Gt)[:, None] * np.linalg.solve(L, M.T).T, compute_uv=False)
        assert np.allclose(s.sigma[:k], ref, atol=1e-12 * ref[0])

    def test_small_values_keep_absolute_accuracy(self):
        sig = 10.0 ** -np.arange(0, 14, 1.0)
        r = np.random.default_rng(3)
        Q1, _ = np.linalg.qr(r.standard_normal((14, 14)))
        Q2, _ = np.linalg.qr(r.standard_normal((14, 14)))
        s = fo.svd(fo.OperatorMatrix(Q1 @ np.diag(sig) @ Q2.T, np.ones(14), np.ones(14)))
        assert np.all(np.abs(s.sigma - sig) <= 1e-14)
        assert s.rank == 11

    def test_rank_collapse_reported(self):
        M = np.outer(np.arange(1.0, 6), np.ones(3))
        s = fo.svd(fo.OperatorMatrix(M, np.ones(3), np.ones(5)))
        assert s.rank == 1

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            fo.svd(fo.OperatorMatrix(np.eye(2), np.array([1.0, -1.0]), np.ones(2)))


class TestNormDiff:
    def test_zero(self, rng):
        M = rng.standard_normal((5, 3))
        op = fo.OperatorMatrix(M, np.ones(3), np.ones(5))
        assert fo.operator_norm_diff(op, op) == 0

    def test_rank_one(self, rng):
        M = rng.standard_normal((5, 3))
        Gs, Gt = np.array([1.0, 4.0, 9.0]), np.array([1.0, 2.0, 1.0, 0.5, 3.0])
        u = rng.standard_normal(5)
        g = rng.standard_normal(3)
        u /= np.sqrt(np.sum(Gt * u * u))  # unit target norm
        g /= np.sqrt(np.sum(g * g / Gs))  # unit dual norm of the functional c -> g.c
        a = fo.OperatorMatrix(M, Gs, Gt)
        b = fo.OperatorMatrix(M + 0.37 * np.outer(u, g), Gs, Gt)
        assert fo.operator_norm_diff(a, b) == pytest.approx(0.37, rel=1e-12)

    @pytest.mark.parametrize("alpha", [-3.0, 0.5, 2.0])
    def test_homogeneous(self, rng, alpha):
        M1, M2 = rng.standard_normal((2, 5, 3))
        Gs, Gt = np.ones(3), np.ones(5)
        d = fo.operator_norm_diff(fo.OperatorMatrix(M1, Gs, Gt), fo.OperatorMatrix(M2, Gs, Gt))
        da = fo.operator_norm_diff(fo.OperatorMatrix(alpha * M1, Gs, Gt), fo.OperatorMatrix(alpha * M2, Gs, Gt))
        assert da == pytest.approx(abs(alpha) * d, rel=1e-12)

    def test_weight_mismatch(self):
        a = fo.OperatorMatrix(np.eye(2), np.ones(2), np.ones(2))
        b = fo.OperatorMatrix(np.eye(2), 2 * np.ones(2), np.ones(2))
        with pytest.raises(ValueError, match="weights"):
            fo.operator_norm_diff(a, b)
