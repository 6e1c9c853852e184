import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from oracles import biased_smi_moments, regression_smi_moments
from smi import closed_form as cf
from smi.errors import DegenerateDataError


def biased_case(seed, n=50, m=25, sy=1.0, sz=2.0, st_=0.33):
    rng = np.random.default_rng(seed)
    Y, Z = cf.simulate_biased(rng, n, m, sy, sz, 0.0, 1.0)
    return Y, Z, cf.BiasedDataConfig.from_data(Y, Z, sy, sz, st_)


def regression_case(seed, k=1.5, n=50, m=50, sy=0.25, sz=3.0):
    rng = np.random.default_rng(seed)
    Y, Z = cf.simulate_regression(rng, n, m, k, sy, sz)
    return Y, Z, cf.RegressionConfig.from_data(Y, Z, sy, sz, k)


def moments(post):
    return np.array([post.mean, post.var, post.joint_mean[1], post.joint_cov[1, 1]])


class TestBiasedPosterior:
    @pytest.mark.parametrize("delta", [0.0, 0.05, 0.7, 3.5, 40.0, math.inf])
    def test_matches_grid_quadrature(self, delta):
        Y, Z, cfg = biased_case(1)
        ref = biased_smi_moments(Y, Z, 1.0, 2.0, 0.33, delta)
        np.testing.assert_allclose(moments(cf.biased_phi_posterior(cfg, delta)), ref,
                                   rtol=0, atol=1e-6)

    @pytest.mark.parametrize("eta", [0.0, 0.08, 0.5, 1.0])
    def test_eta_matches_grid_quadrature(self, eta):
        Y, Z, cfg = biased_case(2)
        ref = biased_smi_moments(Y, Z, 1.0, 2.0, 0.33, None, eta=eta)
        np.testing.assert_allclose(moments(cf.biased_eta_posterior(cfg, eta)), ref,
                                   rtol=0, atol=1e-6)

    def test_lambda_hand_value(self):
        # 6.25 / (6.25 + 50 / (1 + 50 * 0.1089)) evaluated by hand
        cfg = cf.BiasedDataConfig(50, 25, 1.0, 2.0, 0.33, 0.0, 0.0)
        np.testing.assert_allclose(cf.biased_phi_posterior(cfg, 0.0).lam, 0.44617514710972656,
                                   rtol=1e-14)

    def test_cut_endpoint(self):
        _, Z, cfg = biased_case(3)
        post = cf.biased_phi_posterior(cfg, math.inf)
        assert post.lam == 1.0
        assert post.mean == cfg.zbar
        assert post.var == cfg.sigma_z**2 / cfg.m

    def test_bayes_endpoint_normal_equations(self):
        # joint conjugate posterior of (phi, theta) with a flat prior on phi
        _, _, cfg = biased_case(4)
        prec = np.array([[cfg.m / 4 + cfg.n, cfg.n], [cfg.n, cfg.n + 1 / 0.33**2]])
        cov = np.linalg.inv(prec)
        mean = cov @ np.array([cfg.m * cfg.zbar / 4 + cfg.n * cfg.ybar, cfg.n * cfg.ybar])
        post = cf.biased_phi_posterior(cfg, 0.0)
        np.testing.assert_allclose(post.joint_mean, mean, rtol=0, atol=1e-12)
        np.testing.assert_allclose(post.joint_cov, cov, rtol=0, atol=1e-12)

    def test_named_endpoints(self):
        _, _, cfg = biased_case(5)
        assert cf.biased_bayes_posterior(cfg) == cf.biased_phi_posterior(cfg, 0.0)
        assert cf.biased_cut_posterior(cfg) == cf.biased_phi_posterior(cfg, math.inf)
        assert cf.biased_eta_posterior(cfg, 1.0) == cf.biased_phi_posterior(cfg, 0.0)
        assert cf.biased_eta_posterior(cfg, 0.0) == cf.biased_phi_posterior(cfg, math.inf)
        assert cf.biased_gamma_posterior(cfg, 1.0) == cf.biased_phi_posterior(cfg, 0.0)
        assert cf.biased_gamma_posterior(cfg, 0.0) == cf.biased_phi_posterior(cfg, math.inf)

    @settings(max_examples=100, deadline=None)
    @given(delta=st.floats(0.0, 1e3), sy=st.floats(0.1, 5.0), st_=st.floats(0.01, 3.0),
           n=st.integers(1, 500), m=st.integers(1, 500))
    def test_eta_and_gamma_equivalence(self, delta, sy, st_, n, m):
        cfg = cf.BiasedDataConfig(n, m, sy, 2.0, st_, 0.7, -0.4)
        d = cf.biased_phi_posterior(cfg, delta)
        e = cf.biased_eta_posterior(cfg, cf.eta_delta_equivalence(sy, delta))
        g = cf.biased_gamma_posterior(cfg, cf.gamma_delta_equivalence(sy, st_, n, delta))
        for other in (e, g):
            np.testing.assert_allclose(moments(other), moments(d), rtol=1e-12, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(d1=st.floats(0.0, 100.0), extra=st.floats(1e-3, 100.0))
    def test_variance_grows_towards_cut(self, d1, extra):
        _, _, cfg = biased_case(6)
        a, b = cf.biased_phi_posterior(cfg, d1), cf.biased_phi_posterior(cfg, d1 + extra)
        assert a.lam <= b.lam and a.var <= b.var
        assert 0 < a.lam <= 1


class TestThetaGivenPhi:
    def test_matches_quadrature(self):
        Y, _, cfg = biased_case(7)
        for phi in (-0.4, 0.3):
            def f(t, r):
                ly = stats.norm.logpdf(Y[:, 0], phi + t, 1.0).sum()
                return t**r * math.exp(ly + stats.norm.logpdf(t, 0, 0.33) + 60.0)

            mass = [integrate.quad(f, -4, 4, args=(r,), epsabs=0, epsrel=1e-13, limit=200)[0]
                    for r in (0, 1, 2)]
            mean = mass[1] / mass[0]
            var = mass[2] / mass[0] - mean**2
            np.testing.assert_allclose(cf.biased_theta_given_phi(cfg, phi), (mean, var),
                                       rtol=0, atol=1e-8)

    def test_limits(self):
        tight = cf.BiasedDataConfig(50, 25, 1.0, 2.0, 1e-8, 2.0, 0.0)
        m, v = cf.biased_theta_given_phi(tight, 0.5)
        assert abs(m) < 1e-12 and abs(v - 1e-16) < 1e-20
        big = cf.BiasedDataConfig(10**9, 25, 1.0, 2.0, 0.33, 2.0, 0.0)
        m, _ = cf.biased_theta_given_phi(big, 0.5)
        np.testing.assert_allclose(m, 1.5, rtol=1e-7)


class TestEquivalenceMaps:
    def test_values(self):
        assert cf.eta_delta_equivalence(1.0, 0.0) == 1.0
        np.testing.assert_allclose(cf.eta_delta_equivalence(1.0, 3.5), 1 / 13.25, rtol=1e-15)
        assert cf.eta_delta_equivalence(1.0, math.inf) == 0.0
        assert cf.delta_from_eta(1.0, 0.0) == math.inf

    @pytest.mark.parametrize("delta", [0.1, 1.0, 10.0])
    def test_round_trip(self, delta):
        eta = cf.eta_delta_equivalence(1.3, delta)
        np.testing.assert_allclose(cf.delta_from_eta(1.3, eta), delta, rtol=1e-12)

    def test_gamma_in_unit_interval(self):
        for d in (0.0, 0.3, 3.0, 300.0):
            g = cf.gamma_delta_equivalence(1.0, 0.33, 50, d)
            assert 0.0 < g <= 1.0

    def test_eta_range(self):
        _, _, cfg = biased_case(8)
        with pytest.raises(ValueError):
            cf.biased_eta_posterior(cfg, 1.2)
        with pytest.raises(ValueError):
            cf.delta_from_eta(1.0, -0.1)


class TestBiasedElpd:
    @pytest.mark.parametrize("delta", [0.0, 1.0, math.inf])
    def test_monte_carlo(self, delta):
        # E log N2((y, z); predictive) over 1e6 draws from the true model
        _, _, cfg = biased_case(9)
        mu, cov = cf.biased_predictive(cfg, delta)
        rng = np.random.default_rng(99)
        x = np.column_stack([rng.normal(1.0, 1.0, 10**6), rng.normal(0.0, 2.0, 10**6)])
        lp = stats.multivariate_normal(mu, cov).logpdf(x)
        se = lp.std(ddof=1) / math.sqrt(lp.size)
        assert abs(lp.mean() - cf.exact_elpd_biased(cfg, delta)) < 3 * se

    def test_predictive_matches_joint_draws(self):
        # y = phi + theta + noise from joint posterior draws gives the (1 - rho)^2 form
        _, _, cfg = biased_case(10)
        post = cf.biased_phi_posterior(cfg, 2.0)
        rng = np.random.default_rng(3)
        pt = rng.multivariate_normal(post.joint_mean, post.joint_cov, size=2_000_000)
        y = pt.sum(1) + rng.standard_normal(pt.shape[0])
        se = y.var() * math.sqrt(2.0 / y.size)
        _, cov = cf.biased_predictive(cfg, 2.0)
        _, printed = cf.biased_predictive(cfg, 2.0, printed_var_y=True)
        assert abs(y.var() - cov[0, 0]) < 4 * se
        # the single (1 - rho) factor overstates Var(y) well beyond Monte Carlo error
        assert printed[0, 0] - y.var() > 8 * se

    def test_endpoints_equal_standalone(self):
        for seed in range(5):
            _, _, cfg = biased_case(seed)
            np.testing.assert_allclose(cf.exact_elpd_biased(cfg, 0.0),
                                       cf.biased_endpoint_elpd(cfg, "bayes"), rtol=0, atol=1e-10)
            np.testing.assert_allclose(cf.exact_elpd_biased(cfg, math.inf),
                                       cf.biased_endpoint_elpd(cfg, "cut"), rtol=0, atol=1e-10)

    def test_positive_definite(self):
        _, _, cfg = biased_case(11)
        for d in (0.0, 1e-3, 1.0, 1e3, math.inf):
            _, cov = cf.biased_predictive(cfg, d)
            np.testing.assert_allclose(cov, cov.T)
            assert np.all(np.linalg.eigvalsh(cov) > 0)

    def test_continuous_in_delta(self):
        _, _, cfg = biased_case(12)
        f = lambda d: cf.exact_elpd_biased(cfg, d)
        for d in (0.5, 2.0, 8.0):
            h = 1e-4 * d
            central = (f(d + h) - f(d - h)) / (2 * h)
            fine = (f(d + h / 10) - f(d - h / 10)) / (h / 5)
            assert abs(central - fine) < 1e-4
        assert abs(f(1e6) - f(math.inf)) < 1e-6
        assert abs(f(1e-6) - f(0.0)) < 1e-9

    def test_gaussian_elpd_identity(self):
        # E log N(x; mu, cov) at the true distribution equals minus its entropy
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        ent = stats.multivariate_normal(np.zeros(2), cov).entropy()
        np.testing.assert_allclose(cf.gaussian_elpd([0, 0], cov, [0, 0], cov), -ent, rtol=1e-14)

    def test_pmse_bias_variance(self):
        _, _, cfg = biased_case(13)
        post = cf.biased_phi_posterior(cfg, 1.0)
        rng = np.random.default_rng(8)
        pt = rng.multivariate_normal(post.joint_mean, post.joint_cov, size=500_000)
        mc = ((pt - np.array([0.0, 1.0])) ** 2).mean(0)
        np.testing.assert_allclose(cf.biased_pmse(post, 0.0, 1.0), mc, rtol=1e-2)


class TestRegressionPosterior:
    @pytest.mark.parametrize("delta", [0.0, 0.1, 1.0, 10.0, math.inf])
    def test_matches_grid_quadrature(self, delta):
        Y, Z, cfg = regression_case(21)
        ref = regression_smi_moments(Y, Z, 0.25, 3.0, delta)
        np.testing.assert_allclose(moments(cf.regression_smi_posterior(cfg, delta)), ref,
                                   rtol=0, atol=1e-6)

    def test_bayes_endpoint_linear_model(self):
        # weighted least squares on the stacked (Y, Z) design: flat-prior posterior
        Y, Z, cfg = regression_case(22)
        A = np.vstack([np.column_stack([np.ones(50), Y[:, 1]]) / 0.25,
                       np.column_stack([np.ones(50), np.zeros(50)]) / 3.0])
        b = np.concatenate([Y[:, 0] / 0.25, Z[:, 0] / 3.0])
        cov = np.linalg.inv(A.T @ A)
        mean = cov @ A.T @ b
        post = cf.regression_smi_posterior(cfg, 0.0)
        np.testing.assert_allclose(post.joint_mean, mean, rtol=0, atol=1e-10)
        np.testing.assert_allclose(post.joint_cov, cov, rtol=1e-10, atol=1e-14)

    def test_cut_endpoint(self):
        _, Z, cfg = regression_case(23)
        post = cf.regression_smi_posterior(cfg, math.inf)
        assert post.mean == cfg.zbar and post.var == 9.0 / 50

    @pytest.mark.parametrize("delta", [0.0, 0.4, 5.0, math.inf])
    def test_weighted_fit_is_posterior_mean(self, delta):
        Y, Z, cfg = regression_case(24)
        np.testing.assert_allclose(cf.regression_weighted_fit(Y, Z, 0.25, 3.0, delta),
                                   cf.regression_smi_posterior(cfg, delta).joint_mean,
                                   rtol=0, atol=1e-10)

    def test_degenerate_covariate(self):
        Y = np.column_stack([np.ones(5), np.zeros(5)])
        cfg = cf.RegressionConfig.from_data(Y, np.zeros(5), 0.25, 3.0)
        with pytest.raises(DegenerateDataError):
            cf.regression_smi_posterior(cfg, 1.0)

    def test_elpd_z_monte_carlo(self):
        _, _, cfg = regression_case(25)
        post = cf.regression_smi_posterior(cfg, 1.0)
        rng = np.random.default_rng(4)
        z = rng.normal(0.0, 3.0, 10**6)
        lp = stats.norm.logpdf(z, post.mean, math.sqrt(post.var + 9.0))
        se = lp.std(ddof=1) / 1000
        assert abs(lp.mean() - cf.elpd_z_exact(post, 0.0, 3.0)) < 3 * se


class TestPseudoTrue:
    def test_hand_values(self):
        # U(0, 2) moments, k = 2, alpha = 1, sigma_y = 0.25, sigma_z = 3, delta = 0:
        # numerator -2/9, denominator 1/3 + 1/108 = 37/108, so phi = -24/37, theta = 147/74
        cfg = cf.RegressionConfig(50, 50, 0.25, 3.0, k=2.0)
        phi, theta = cf.pseudo_true_values(cfg, 0.0)
        np.testing.assert_allclose((phi, theta), (-24 / 37, 147 / 74), rtol=1e-14)

    @settings(max_examples=50, deadline=None)
    @given(delta=st.floats(0.0, 100.0), alpha=st.floats(0.1, 10.0))
    def test_well_specified_gives_truth(self, delta, alpha):
        cfg = cf.RegressionConfig(50, 50, 0.25, 3.0, k=1.0, phi_star=0.3, theta_star=1.7)
        phi, theta = cf.pseudo_true_values(cfg, delta, alpha=alpha)
        np.testing.assert_allclose((phi, theta), (0.3, 1.7), rtol=1e-12, atol=1e-12)

    def test_large_delta_recovers_phi(self):
        cfg = cf.RegressionConfig(50, 50, 0.25, 3.0, k=2.0)
        phi, _ = cf.pseudo_true_values(cfg, 1e4)
        assert abs(phi) < 1e-6
        assert cf.pseudo_true_values(cfg, math.inf)[0] == 0.0

    def test_bias_shrinks_with_delta(self):
        cfg = cf.RegressionConfig(50, 50, 0.25, 3.0, k=2.0)
        b = [abs(cf.pseudo_true_values(cfg, d)[0]) for d in (0.0, 0.5, 2.0, 8.0)]
        assert all(x > y for x, y in zip(b, b[1:]))
