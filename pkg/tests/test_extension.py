import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from fraccal import extension as ext
from fraccal import fracop as fo
from fraccal import specfun as sf
from fraccal.core import Geometry, Metric, Region
from fraccal.eigen import analytic_basis, discrete_basis
from fraccal.inverse import bump_metric, geometric_taus

GP = Geometry.interval(np.pi, 255)
BP = analytic_basis(GP, 63)
G1 = Geometry.interval(1.0, 127)
B1 = discrete_basis(Metric.identity(G1))
GC = Geometry.circle(2 * np.pi, 64)
BC = discrete_basis(Metric.identity(GC))


def unit(k, size):
    c = np.zeros(size)
    c[k] = 1.0
    return fo.SpectralCoeffs(None, c)


def l2(u, g):
    return np.sqrt(g.cell_volume * np.sum(u * u))


class TestProfile:
    def test_half_closed_form(self):
        assert ext.profile(0.5, 4.0, 1.0) == pytest.approx(0.5 * np.exp(-2), rel=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(0.1, 100))
    def test_trace_limit(self, s, lam):
        assert ext.profile(s, lam, 0.0) == pytest.approx(lam**-s, rel=1e-14)
        # the gap closes like (sqrt(lam) t)^(2s)
        gap = np.abs(ext.profile(s, lam, 10.0 ** -np.arange(2, 12)) - lam**-s)
        resolved = gap[gap > 1e-12 * lam**-s]
        assert resolved.size >= 3 and np.all(np.diff(resolved) < 0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(0.5, 200))
    def test_monotone_decay(self, s, lam):
        t = s / np.sqrt(lam) + np.linspace(0, 20 / np.sqrt(lam), 200)
        assert np.all(np.diff(ext.profile(s, lam, t)) < 0)

    @pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
    def test_derivative(self, s):
        t = np.array([0.1, 0.7, 2.0])
        d = 1e-6
        fd = (ext.profile(s, 3.0, t + d) - ext.profile(s, 3.0, t - d)) / (2 * d)
        assert np.allclose(ext.profile_derivative(s, 3.0, t), fd, rtol=1e-7)

    def test_backends(self, backend):
        from scipy.special import kv

        want = sf.c_tilde(0.3) * kv(0.3, 0.4 * np.sqrt(2)) * (0.4 / np.sqrt(2)) ** 0.3
        assert ext.profile(0.3, 2.0, 0.4) == pytest.approx(want, rel=1e-9)


class TestExtensionEval:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95), st.integers(0, 2**31))
    def test_trace_consistency(self, s, seed):
        f = B1.vectors @ np.random.default_rng(seed).uniform(-1, 1, B1.size)
        u0 = ext.extension_eval(s, f, B1, 0.0).values
        assert l2(u0 - fo.solve_sts(s, f, B1), G1) <= 1e-8 * l2(f, G1)

    def test_mode_trace(self):
        e = ext.extension_eval(0.3, BP.vectors[:, 2], BP, 0.0)
        assert np.allclose(e.values, BP.eigenvalues[2] ** -0.3 * BP.vectors[:, 2], atol=1e-12)

    def test_half_closed_form(self):
        e = ext.extension_eval(0.5, BP.vectors[:, 1], BP, 1.0)
        assert np.allclose(e.values, 0.5 * np.exp(-2) * BP.vectors[:, 1], atol=1e-12)

    def test_zero(self):
        for t in (0.0, 0.5, 3.0):
            assert not ext.extension_eval(0.4, np.zeros(GP.size), BP, t).values.any()

    def test_negative_height(self):
        with pytest.raises(ValueError):
            ext.extension_eval(0.5, np.zeros(GP.size), BP, -1.0)


class TestNeumann:
    probes = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]

    def test_half_first_mode(self):
        r = ext.neumann_trace_residual(0.5, BP.vectors[:, 0], BP, self.probes)
        assert r.residual <= 1e-6

    def test_zero(self):
        assert ext.neumann_trace_residual(0.3, np.zeros(GP.size), BP, self.probes).residual == 0

    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_refinement_decreases(self, s):
        r = ext.neumann_trace_residual(s, BP.vectors[:, 1], BP, self.probes)
        assert np.all(np.diff(r.probe_residuals) < 0)
        assert r.residual < r.probe_residuals[-1]

    def test_bad_probes(self):
        with pytest.raises(ValueError):
            ext.neumann_trace_residual(0.5, BP.vectors[:, 0], BP, [1e-3, 1e-2])


class TestReduction:
    def test_half_first_mode(self):
        r = ext.reduction_integral(0.5, BP.vectors[:, 0], BP)
        assert r.numeric_modes[0] == pytest.approx(1.0, abs=1e-6)

    def test_second_mode(self):
        for s in (0.25, 0.5, 0.75):
            r = ext.reduction_integral(s, BP.vectors[:, 1], BP)
            assert r.numeric_modes[1] == pytest.approx(0.25, abs=1e-6)

    @pytest.mark.parametrize("basis", [B1, BC], ids=["interval", "circle"])
    @pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
    def test_random_sources(self, basis, s, rng):
        for _ in range(3):
            c = rng.uniform(-1, 1, basis.size)
            r = ext.reduction_integral(s, fo.SpectralCoeffs(basis, c), basis)
            ref = fo.apply_frac(-1.0, basis.vectors @ c, basis)
            g = basis.geometry
            assert l2(r.analytic - ref, g) <= 1e-12 * l2(ref, g)
            assert r.discrepancy <= 1e-6

    def test_tail_reported(self):
        r = ext.reduction_integral(0.5, BP.vectors[:, 0], BP, t_max=4.0)
        # the discarded part of int e^-t over (4, inf)
        assert r.tail_bound == pytest.approx(np.exp(-4), rel=1e-9)
        assert r.numeric_modes[0] == pytest.approx(1 - np.exp(-4), rel=1e-9)

    def test_height_too_small(self):
        b = analytic_basis(Geometry.interval(4000.0, 63), 4)
        with pytest.raises(ValueError, match="tail bound"):
            ext.reduction_integral(0.5, b.vectors[:, 0], b)

    def test_circle_mean(self):
        with pytest.raises(ValueError):
            ext.reduction_integral(0.5, np.ones(GC.size), BC)


class TestTail:
    def test_half_first_mode(self):
        meas, bound = ext.truncation_tail_bound(0.5, BP.vectors[:, 0], BP, 2.0)
        assert meas == pytest.approx(np.exp(-2), rel=1e-9)
        assert bound == pytest.approx(sf.c_tilde(0.5) * np.sqrt(np.pi / 2) * np.exp(-2), rel=1e-9)
        assert meas <= bound

    @pytest.mark.parametrize("s", [0.3, 0.7])
    def test_small_L_limit(self, s):
        c = fo.analyze(BP.vectors[:, 0], BP)
        # the missing piece near 0 scales like L^(2-2s)
        meas, bound = ext.truncation_tail_bound(s, c, BP, 1e-14)
        full = sf.c_tilde(s) * sf.kernel_mass(s)
        assert bound == pytest.approx(full, rel=1e-6)
        assert meas == pytest.approx(full, rel=1e-6)

    @pytest.mark.parametrize("basis", [B1, BC], ids=["interval", "circle"])
    @settings(max_examples=20, deadline=None)
    @given(st.floats(0.05, 0.95), st.floats(1e-3, 20), st.integers(0, 2**31))
    def test_domination(self, basis, s, L, seed):
        c = np.random.default_rng(seed).uniform(-1, 1, basis.size)
        meas, bound = ext.truncation_tail_bound(s, fo.SpectralCoeffs(basis, c), basis, L)
        assert meas <= bound

    def test_bad_L(self):
        with pytest.raises(ValueError):
            ext.truncation_tail_bound(0.5, BP.vectors[:, 0], BP, 0.0)


def disk_norm(k, x0, t0, r):
    lam = BP.eigenvalues[k]

    def f(t, x):
        return (np.sqrt(2 / np.pi) * np.sin((k + 1) * x) * np.exp(-np.sqrt(lam) * t) / np.sqrt(lam)) ** 2

    return np.sqrt(dblquad(f, x0 - r, x0 + r, lambda x: t0 - np.sqrt(r * r - (x - x0) ** 2), lambda x: t0 + np.sqrt(r * r - (x - x0) ** 2), epsabs=1e-13)[0])


class TestThreeBalls:
    O = Region.from_box(GP, [(0.5, 2.6)], "O")

    def test_zero(self):
        n = ext.three_balls_norms(0.5, np.zeros((BP.size, 3)), BP, [1.55], 0.6, 0.1)
        assert not n.any()

    @pytest.mark.parametrize("k", [0, 1, 3])
    def test_single_mode_closed_form(self, k):
        c = np.zeros((BP.size, 1))
        c[k] = 1.0
        grid = ext.three_balls_norms(0.5, c, BP, [1.55], 0.6, 0.1)[:, 0]
        exact = np.array([disk_norm(k, 1.55, 0.6, r) for r in (0.1, 0.2, 0.4)])
        assert np.allclose(grid, exact, rtol=0.03)
        res = ext.three_balls_check(0.5, BP, self.O, [1.55], 0.6, 0.1, n_samples=20, n_calibration=50)
        assert exact[1] <= res.C * exact[0] ** res.alpha * exact[2] ** (1 - res.alpha)

    def test_random_samples(self):
        res = ext.three_balls_check(0.5, B1, Region.from_box(G1, [(0.625, 0.875)], "O"), [0.75], 0.2, 0.03)
        assert res.violations == 0
        assert 0 < res.alpha < 1
        assert res.norms.shape == (3, 100)

    def test_ball_outside(self):
        with pytest.raises(ValueError):
            ext.three_balls_check(0.5, BP, self.O, [1.55], 0.3, 0.1)
        with pytest.raises(ValueError):
            ext.three_balls_check(0.5, BP, self.O, [0.8], 0.6, 0.1)

    def test_deterministic(self):
        a = ext.three_balls_check(0.5, BP, self.O, [1.55], 0.6, 0.1, n_samples=10, n_calibration=10, seed=4)
        b = ext.three_balls_check(0.5, BP, self.O, [1.55], 0.6, 0.1, n_samples=10, n_calibration=10, seed=4)
        assert np.array_equal(a.norms, b.norms) and a.C == b.C


class TestBoundaryBulk:
    O = Region.from_box(G1, [(0.625, 0.875)], "O")
    A = Region.from_box(G1, [(0.1875, 0.4375)], "A")
    src = fo.source_dictionary(O, 1).elements[:, 0]

    def test_identical(self):
        t = ext.boundary_bulk_check(0.5, [B1], B1, [0.0], self.O, self.src, [0.75], 0.1)
        assert t.epsilon[0] == 0 and t.bulk[0] == 0

    def test_bump_family(self):
        taus = geometric_taus(10)
        bases = [discrete_basis(bump_metric(G1, self.A, tau)) for tau in taus]
        t = ext.boundary_bulk_check(0.5, bases, B1, taus, self.O, self.src, [0.75], 0.1)
        assert np.all(np.diff(t.epsilon) < 0) and np.all(np.diff(t.bulk) < 0)
        assert 0 < t.slope <= 1
