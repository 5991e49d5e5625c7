import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nlffr.funcdata import ObservedCurve
from nlffr.inference import (
    DegenerateCovariatesError,
    bands_many,
    eigen_system,
    phi_at,
    pointwise_ci,
    pointwise_sigma,
    pointwise_sigma_from_d,
    residual_model,
    s_n_hat,
    simulate_c_alpha,
    simultaneous_band,
    sup_norm_samples,
)
from nlffr.regression import (
    FitConfig,
    d_vectors,
    fit,
    predict,
    prediction_weights,
    recover_covariates,
    training_responses,
)

from conftest import random_curves

GRID = np.linspace(0, 1, 21)
FIXED = FitConfig(x_eps=1e-3, x_gamma=7.0, y_eps=1e-3, y_gamma=5.0, eps_x=0.05, gamma_x=0.5)


def toy(seed, n=6, **kw):
    r = np.random.default_rng(seed)
    xs = random_curves(r, n)
    ys = [ObservedCurve(c.subject_id, c.times, np.sin(2 * c.values) + r.normal(0, 0.2, c.m)) for c in xs]
    cfg = FitConfig(**{**FIXED.__dict__, **kw})
    return fit(xs, ys, cfg), xs, random_curves(r, 1, prefix="new")[0]


def oracle_eigen(model):
    """Eigenpairs from the general (non-symmetric) solver, unit H-norm coordinates."""
    n = model.n
    vals, vecs = np.linalg.eig(model.gx / n)
    vals, vecs = vals.real, vecs.real
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    keep = vals > 1e-10 * vals[0]
    out = []
    for lam, v in zip(vals[keep], vecs[:, keep].T):
        out.append((lam, v / np.sqrt(v @ model.gx @ v)))
    return out


class TestEigen:
    def test_two_by_two(self):
        m, xs, _ = toy(0, n=2)
        g = m.gx[0, 0]
        np.testing.assert_allclose(m.gx, g * np.array([[1, -1], [-1, 1]]), atol=1e-15)
        es = eigen_system(m)
        assert es.n_components == 1
        assert es.lambdas[0] == pytest.approx(g, rel=1e-12)

    def test_trace_identity(self):
        m, _, _ = toy(1, n=8)
        es = eigen_system(m)
        assert es.all_lambdas.sum() == pytest.approx(np.trace(m.gx) / m.n, abs=1e-8)

    def test_dense_oracle(self):
        m, _, _ = toy(2, n=6)
        es = eigen_system(m)
        ref = oracle_eigen(m)
        assert es.n_components == len(ref)
        for j, (lam, a) in enumerate(ref):
            assert es.lambdas[j] == pytest.approx(lam, abs=1e-8)
            got = es.coord_vectors[:, j]
            sign = np.sign(got @ a)
            np.testing.assert_allclose(sign * got, a, atol=1e-8 * max(1, np.abs(a).max()))

    def test_residual_and_normalization(self):
        m, _, _ = toy(3, n=10)
        es = eigen_system(m)
        norm_g = np.linalg.norm(m.gx, 2)
        for j in range(es.n_components):
            a = es.coord_vectors[:, j]
            assert np.linalg.norm(m.gx @ a / m.n - es.lambdas[j] * a) <= 1e-8 * norm_g
            assert a @ m.gx @ a == pytest.approx(1.0, rel=1e-8)
        assert np.all(np.diff(es.lambdas) <= 0)

    def test_constant_covariates_rejected(self):
        x = [ObservedCurve(i, [0.2, 0.6], [1.0, -1.0]) for i in "abc"]
        y = [ObservedCurve(i, [0.5], [float(k)]) for k, i in enumerate("abc")]
        with pytest.raises(DegenerateCovariatesError):
            eigen_system(fit(x, y, FIXED))


class TestPhi:
    def test_zero_d(self):
        es = eigen_system(toy(4)[0])
        assert phi_at(es, 0, np.zeros(6)) == 0.0

    def test_two_subject_hand_computation(self):
        m, xs, _ = toy(5, n=2)
        es = eigen_system(m)
        d = d_vectors(m, recover_covariates(m, [xs[0]]))[:, 0]
        k = m.kx[0, 1]
        np.testing.assert_allclose(d, [(1 - k) / 2, -(1 - k) / 2], atol=1e-12)
        # G = g [[1, -1], [-1, 1]] with g = (1 - k) / 2 gives phi_1(X_1) = sqrt(g)
        assert abs(phi_at(es, 0, d)) == pytest.approx(np.sqrt((1 - k) / 2), rel=1e-10)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 1000), st.integers(0, 2**32 - 1))
    def test_linear_in_d(self, seed, dseed):
        m = toy(seed)[0]
        es = eigen_system(m)
        r = np.random.default_rng(dseed)
        d1, d2 = r.standard_normal(6), r.standard_normal(6)
        for j in range(es.n_components):
            assert phi_at(es, j, d1 + d2) == pytest.approx(phi_at(es, j, d1) + phi_at(es, j, d2), abs=1e-9)

    def test_out_of_range(self):
        es = eigen_system(toy(6)[0])
        with pytest.raises(IndexError):
            phi_at(es, es.n_components, np.zeros(6))


class TestPointwise:
    def test_zero_residual_variance(self):
        m, _, x0 = toy(7)
        es = eigen_system(m)
        r = residual_model(m, GRID)
        zero = r.__class__(r.grid, 0 * r.residuals, r.u_coeff_weights, 0 * r.u2_of_t, 0 * r.sigma_uu_grid)
        assert np.all(pointwise_sigma(m, es, zero, x0) == 0)

    def test_single_component_closed_form(self):
        m, xs, x0 = toy(8, n=2)
        es = eigen_system(m)
        r = residual_model(m, GRID)
        d = d_vectors(m, recover_covariates(m, [x0]))[:, 0]
        lam, phi = es.lambdas[0], phi_at(es, 0, d)
        want = np.sqrt(r.u2_of_t / 2 * lam / (lam + m.epsilon_x / 2) ** 2 * phi**2)
        np.testing.assert_allclose(pointwise_sigma(m, es, r, x0), want, rtol=1e-12)

    def test_series_oracle(self):
        m, _, x0 = toy(9, n=6)
        es = eigen_system(m)
        r = residual_model(m, GRID)
        d = prediction_weights(m, x0).d_x
        eps_n = m.epsilon_x / m.n
        series = 0.0
        for lam, a in oracle_eigen(m):
            series += lam / (lam + eps_n) ** 2 * (a @ d) ** 2
        want = np.sqrt(r.u2_of_t / m.n * series)
        np.testing.assert_allclose(pointwise_sigma(m, es, r, x0), want, rtol=1e-8, atol=1e-14)
        assert pointwise_sigma(m, es, r, x0, t=GRID[5]) == pytest.approx(want[5], rel=1e-8)

    def test_alpha_one_zero_width(self):
        m, _, x0 = toy(10)
        lo, hi = pointwise_ci(m, eigen_system(m), residual_model(m, GRID), x0, alpha=1.0)
        np.testing.assert_array_equal(lo, hi)
        np.testing.assert_allclose(lo, predict(m, x0, GRID), atol=1e-14)

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
    def test_bad_alpha(self, alpha):
        m, _, x0 = toy(11)
        with pytest.raises(ValueError):
            pointwise_ci(m, eigen_system(m), residual_model(m, GRID), x0, alpha=alpha)

    def test_width_monotone_in_u2(self):
        m, _, x0 = toy(12)
        es = eigen_system(m)
        r = residual_model(m, GRID)
        d = prediction_weights(m, x0).d_x
        widths = []
        for scale in (0.5, 1.0, 2.0, 4.0):
            rs = r.__class__(r.grid, r.residuals, r.u_coeff_weights, scale * r.u2_of_t, r.sigma_uu_grid)
            widths.append(pointwise_sigma_from_d(m, es, rs, d))
        for a, b in zip(widths, widths[1:]):
            assert np.all(b >= a)

    def test_residual_model_invariants(self):
        m, xs, _ = toy(13, n=8)
        r = residual_model(m, GRID)
        assert np.all(r.u2_of_t >= 0)
        np.testing.assert_array_equal(r.sigma_uu_grid, r.sigma_uu_grid.T)
        np.testing.assert_allclose(np.diag(r.sigma_uu_grid), r.u2_of_t, rtol=1e-14)
        assert np.linalg.eigvalsh(r.sigma_uu_grid).min() >= -1e-9
        # residuals are fitted-value differences on the predict path
        fitted = np.array([predict(m, x, GRID) for x in xs])
        np.testing.assert_allclose(r.residuals, training_responses(m, GRID) - fitted, atol=1e-10)


class TestSn:
    def test_constant_covariates(self):
        x = [ObservedCurve(i, [0.2, 0.6], [1.0, -1.0]) for i in "ab"]
        y = [ObservedCurve(i, [0.5], [float(k)]) for k, i in enumerate("ab")]
        m = fit(x, y, FIXED)
        assert s_n_hat(m, x[0]) == 0.0

    def test_definition(self):
        m, _, x0 = toy(14, n=3)
        w = prediction_weights(m, x0).w
        assert s_n_hat(m, x0) == pytest.approx(np.sqrt(np.sum(w**2)), rel=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_operator_coordinate_identity(self, seed):
        m, _, x0 = toy(100 + seed, n=5)
        n = m.n
        pw = prediction_weights(m, x0)
        g = m.gx
        # V = (Sigma_XX + eps_n)^-1 in coordinates of the spanning system {kappa(., X_i) - mu}
        v_op = np.linalg.inv(g / n + (m.epsilon_x / n) * np.eye(n))
        inner = np.array([(v_op @ np.eye(n)[i]) @ g @ pw.c_x for i in range(n)])
        np.testing.assert_allclose(inner, n * pw.w, atol=1e-9)
        plug_in = np.mean(inner**2) / n
        assert plug_in == pytest.approx(s_n_hat(m, x0) ** 2, rel=1e-9)


class TestCAlpha:
    def test_zero_covariance(self):
        assert simulate_c_alpha(np.zeros((4, 4)), 0.05, 500, seed=1) == 0.0

    def test_monotone_in_alpha(self, rng):
        a = rng.standard_normal((6, 6))
        cov = a @ a.T
        c05 = simulate_c_alpha(cov, 0.05, 2000, seed=3)
        c10 = simulate_c_alpha(cov, 0.10, 2000, seed=3)
        assert c05 >= c10

    def test_two_point_half_normal(self):
        sigma, alpha, n = 0.7, 0.05, 100_000
        # P(max(|Z1|, |Z2|) <= c) = (2 Phi(c / sigma) - 1)^2
        q = stats.norm.ppf((1 + np.sqrt(1 - alpha)) / 2) * sigma
        c = simulate_c_alpha(sigma**2 * np.eye(2), alpha, n, seed=11)
        # standard error of an empirical quantile: sqrt(p (1 - p) / n) / f(q)
        f = 2 * (2 * stats.norm.cdf(q / sigma) - 1) * 2 * stats.norm.pdf(q / sigma) / sigma
        se = np.sqrt(alpha * (1 - alpha) / n) / f
        assert abs(c - q) <= 3 * se

    def test_reproducible(self, rng):
        a = rng.standard_normal((5, 5))
        cov = a @ a.T
        s1 = sup_norm_samples(cov, 5000, seed=42)
        s2 = sup_norm_samples(cov, 5000, seed=42)
        np.testing.assert_array_equal(s1, s2)
        assert simulate_c_alpha(cov, 0.05, 5000, 42) == simulate_c_alpha(cov, 0.05, 5000, 42)

    def test_negative_eigenvalues_clipped(self):
        cov = np.diag([1.0, -1e-12, 0.0])
        assert np.isfinite(simulate_c_alpha(cov, 0.05, 200, 0))

    def test_validation(self):
        with pytest.raises(ValueError):
            simulate_c_alpha(np.zeros((2, 3)), 0.05, 200)
        with pytest.raises(ValueError):
            simulate_c_alpha(np.zeros((2, 2)), 0.05, 200, grid=[0.0, 0.5, 1.0])
        with pytest.raises(ValueError):
            simulate_c_alpha(np.zeros((2, 2)), 0.05, 99)
        with pytest.raises(ValueError):
            simulate_c_alpha(np.zeros((2, 2)), 1.0, 200)


class TestBand:
    def test_zero_residuals(self):
        r = np.random.default_rng(15)
        xs = random_curves(r, 5)
        ys = [ObservedCurve(c.subject_id, [0.2, 0.5, 0.9], [1.0, -1.0, 0.5]) for c in xs]
        m = fit(xs, ys, FIXED)
        band = simultaneous_band(m, residual_model(m, GRID), xs[0], 0.05, 500, seed=0)
        assert band.band_halfwidth == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(band.pointwise_halfwidth, 0.0, atol=1e-12)

    def test_structure(self):
        m, _, x0 = toy(16)
        r = residual_model(m, GRID)
        band = simultaneous_band(m, r, x0, 0.05, 1000, seed=2)
        np.testing.assert_allclose(band.center, predict(m, x0, GRID), atol=1e-13)
        c = simulate_c_alpha(r, 0.05, 1000, 2)
        assert band.band_halfwidth == pytest.approx(s_n_hat(m, x0) * c, rel=1e-12)
        lo, hi = band.band
        np.testing.assert_allclose(hi - lo, 2 * band.band_halfwidth)
        assert np.all(band.pointwise_halfwidth >= 0)

    def test_bands_many_matches_single(self):
        m, _, x0 = toy(17)
        others = random_curves(np.random.default_rng(5), 3, prefix="o")
        many = bands_many(m, [x0, *others], GRID, 0.1, 800, seed=9)
        single = simultaneous_band(m, residual_model(m, GRID), x0, 0.1, 800, seed=9)
        assert many[0].band_halfwidth == pytest.approx(single.band_halfwidth, rel=1e-12)
        np.testing.assert_allclose(many[0].center, single.center, atol=1e-13)
        np.testing.assert_allclose(many[0].pointwise_halfwidth, single.pointwise_halfwidth, rtol=1e-12)

    def test_permutation_invariance(self):
        r = np.random.default_rng(18)
        xs = random_curves(r, 7)
        ys = [ObservedCurve(c.subject_id, c.times, np.cos(c.values)) for c in xs]
        x0 = random_curves(r, 1, prefix="n")[0]
        p = r.permutation(7)
        m1 = fit(xs, ys, FIXED)
        m2 = fit([xs[i] for i in p], [ys[i] for i in p], FIXED)
        assert s_n_hat(m1, x0) == pytest.approx(s_n_hat(m2, x0), rel=1e-10)
        s1 = pointwise_sigma(m1, eigen_system(m1), residual_model(m1, GRID), x0)
        s2 = pointwise_sigma(m2, eigen_system(m2), residual_model(m2, GRID), x0)
        np.testing.assert_allclose(s1, s2, rtol=1e-8, atol=1e-14)
