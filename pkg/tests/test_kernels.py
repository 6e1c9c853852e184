import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from smi.core import biased_data_model
from smi.kernels import (DiscreteUniform, GaussianKernel, KernelSpec, ScaledTopHat, TopHat,
                         log_gamma_p, log_gamma_q, smoothed_loglik_gaussian,
                         smoothed_poisson_loglik)


def brute_window(y, mu, half):
    """log of mean Poisson pmf over the integers in [y - half, y + half] (clipped at 0)."""
    lo = max(0, math.ceil(y - half))
    hi = math.floor(y + half)
    ks = np.arange(lo, hi + 1)
    return float(special.logsumexp(stats.poisson.logpmf(ks, mu)) - math.log(ks.size))


class TestSmoothedPoisson:
    def test_small_delta_is_pmf(self):
        # 5^5 e^-5 / 5! = 0.1754673697678507
        np.testing.assert_allclose(smoothed_poisson_loglik(5, 5.0, 0.5),
                                   math.log(0.1754673697678507), rtol=0, atol=1e-13)

    def test_window_of_three(self):
        p = [math.exp(-3) * 3**k / math.factorial(k) for k in (1, 2, 3)]
        np.testing.assert_allclose(smoothed_poisson_loglik(2, 3.0, 1.5),
                                   math.log(sum(p) / 3), rtol=0, atol=1e-13)

    def test_cdf_form(self):
        F = stats.poisson(3.0).cdf
        np.testing.assert_allclose(smoothed_poisson_loglik(2, 3.0, 1.5),
                                   math.log((F(3) - F(0)) / 3), rtol=0, atol=1e-13)

    @pytest.mark.parametrize("y,mu,delta", [
        (0, 0.2, 3.0), (4, 0.05, 2.0), (97, 140.0, 8.0), (162, 90.0, 64.0),
        (9000, 10000.0, 300.0), (3, 1e-3, 1.0), (50, 400.0, 16.0), (1, 2.0, 1.0),
    ])
    def test_matches_brute_force(self, y, mu, delta):
        np.testing.assert_allclose(smoothed_poisson_loglik(y, mu, delta),
                                   brute_window(y, mu, delta), rtol=1e-10, atol=1e-10)

    def test_scaled_tophat_width(self):
        # half-width sqrt(16) * 1.5 = 6
        np.testing.assert_allclose(smoothed_poisson_loglik(16, 20.0, 1.5, "scaled_tophat"),
                                   brute_window(16, 20.0, 6.0), rtol=1e-12)
        # y = 0 uses delta itself
        np.testing.assert_allclose(smoothed_poisson_loglik(0, 2.0, 2.5, "scaled_tophat"),
                                   brute_window(0, 2.0, 2.5), rtol=1e-12)

    def test_broadcast_and_factorisation(self):
        y = np.array([0, 3, 7, 12])
        mu = np.array([0.5, 2.0, 9.0, 11.0])
        each = smoothed_poisson_loglik(y, mu, 2.0)
        assert each.shape == (4,)
        total = sum(smoothed_poisson_loglik(int(a), float(b), 2.0) for a, b in zip(y, mu))
        np.testing.assert_allclose(each.sum(), total, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("args", [(-1, 2.0, 1.0), (2.5, 2.0, 1.0), (2, 0.0, 1.0),
                                      (2, 2.0, -1.0)])
    def test_rejects_bad_input(self, args):
        with pytest.raises(ValueError):
            smoothed_poisson_loglik(*args)

    def test_continuous_kernel_rejected(self):
        with pytest.raises(ValueError):
            smoothed_poisson_loglik(2, 2.0, 1.0, "gaussian")

    @settings(max_examples=200, deadline=None)
    @given(y=st.integers(0, 500), mu=st.floats(0.01, 800.0), delta=st.floats(0.0, 0.999))
    def test_below_one_equals_pmf(self, y, mu, delta):
        np.testing.assert_allclose(smoothed_poisson_loglik(y, mu, delta),
                                   stats.poisson.logpmf(y, mu), rtol=1e-10, atol=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(y=st.integers(0, 300), mu=st.floats(0.05, 600.0), delta=st.floats(1.0, 80.0))
    def test_property_brute_force(self, y, mu, delta):
        np.testing.assert_allclose(smoothed_poisson_loglik(y, mu, delta),
                                   brute_window(y, mu, delta), rtol=1e-9, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(y=st.integers(0, 200), mu=st.floats(0.05, 400.0), d1=st.floats(1.0, 40.0),
           extra=st.floats(0.0, 40.0))
    def test_window_mass_grows_with_delta(self, y, mu, d1, extra):
        # |V| p_delta is the window probability, non-decreasing in delta
        def mass(d):
            lo, hi = DiscreteUniform(d).neighborhood(y)
            return smoothed_poisson_loglik(y, mu, d) + math.log(hi - lo + 1)

        assert mass(d1 + extra) >= mass(d1) - 1e-10


class TestIncompleteGamma:
    @pytest.mark.parametrize("a,x", [(1.0, 0.5), (5.0, 3.0), (50.0, 60.0), (1000.0, 900.0),
                                     (0.5, 20.0), (200.0, 1.0), (3.0, 1e-8),
                                     (5.0, 2000.0)])
    def test_against_multiprecision(self, a, x):
        # 50-digit reference; (200, 1) and (5, 2000) underflow in double precision
        with mpmath.workdps(50):
            ref_p = float(mpmath.log(mpmath.gammainc(a, 0, x, regularized=True)))
            ref_q = float(mpmath.log(mpmath.gammainc(a, x, mpmath.inf, regularized=True)))
        np.testing.assert_allclose(log_gamma_p(a, x), ref_p, rtol=1e-10)
        np.testing.assert_allclose(log_gamma_q(a, x), ref_q, rtol=1e-10)

    def test_against_scipy_bulk(self):
        a = np.array([0.3, 2.0, 7.5, 40.0])
        x = np.array([0.2, 2.5, 5.0, 44.0])
        for ai, xi in zip(a, x):
            np.testing.assert_allclose(math.exp(log_gamma_p(ai, xi)), special.gammainc(ai, xi),
                                       rtol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(a=st.floats(0.1, 500.0), x=st.floats(1e-3, 800.0))
    def test_complementary(self, a, x):
        p, q = math.exp(log_gamma_p(a, x)), math.exp(log_gamma_q(a, x))
        np.testing.assert_allclose(p + q, 1.0, rtol=0, atol=1e-10)


class TestKernelSpec:
    def test_neighbourhoods(self):
        assert tuple(map(int, DiscreteUniform(1).neighborhood(5))) == (4, 6)
        assert tuple(map(int, DiscreteUniform(2).neighborhood(0))) == (0, 2)
        assert tuple(map(int, DiscreteUniform(0.5).neighborhood(7))) == (7, 7)
        assert tuple(map(int, ScaledTopHat(1.0).neighborhood(9))) == (6, 12)

    def test_neighbourhood_needs_discrete_kernel(self):
        with pytest.raises(ValueError):
            GaussianKernel(1.0).neighborhood(3)

    @pytest.mark.parametrize("kern", [DiscreteUniform(0), DiscreteUniform(3.5),
                                      ScaledTopHat(1.2)])
    @pytest.mark.parametrize("y", [0, 1, 9, 40])
    def test_discrete_kernel_normalised(self, kern, y):
        yt = np.arange(0, 200)
        np.testing.assert_allclose(np.exp(kern.logpdf(y, yt)).sum(), 1.0, rtol=1e-14)

    @pytest.mark.parametrize("kern", [GaussianKernel(0.7), TopHat(1.3)])
    def test_continuous_kernel_normalised(self, kern):
        val, _ = integrate.quad(lambda t: math.exp(kern.logpdf(2.0, t)), -20, 20,
                                points=[0.7, 3.3], limit=200)
        np.testing.assert_allclose(val, 1.0, rtol=1e-9)

    @pytest.mark.parametrize("kind,delta", [("gaussian", 0.0), ("tophat", -1.0),
                                            ("bogus", 1.0), ("discrete_uniform", math.nan)])
    def test_invalid(self, kind, delta):
        with pytest.raises(ValueError):
            KernelSpec(kind, delta)

    def test_samples_in_support(self):
        rng = np.random.default_rng(1)
        y = np.array([0, 3, 10, 50])
        for kern in (DiscreteUniform(4), ScaledTopHat(1.0)):
            lo, hi = kern.neighborhood(y)
            for _ in range(50):
                s = kern.sample(y, rng)
                assert np.all((s >= lo) & (s <= hi))
        s = TopHat(0.5).sample(np.zeros(1000), rng)
        assert np.all(np.abs(s) < 0.5)


class TestGaussianSmoothing:
    def test_variance_sum_identity(self):
        # N(0, 1) model, observation 0, delta 1: log N(0; 0, 2)
        m = biased_data_model(sigma_y=1.0)
        val = m.smoothed_y_loglik([-0.5], [0.5], [[0.0]], GaussianKernel(1.0))
        np.testing.assert_allclose(val, -0.5 * math.log(4 * math.pi), rtol=0, atol=1e-14)

    def test_small_delta_limit(self):
        m = biased_data_model()
        Y = np.array([[0.3], [1.7], [-0.4]])
        exact = m.y_loglik([0.1], [0.6], Y)
        val = m.smoothed_y_loglik([0.1], [0.6], Y, GaussianKernel(1e-4))
        assert abs(val - exact) < 1e-6

    def test_quadrature_path_matches_closed_form(self):
        m = biased_data_model(sigma_y=1.3)
        Y = np.array([[0.3], [2.9], [-1.4], [0.0]])
        for d in (0.05, 0.8, 4.0):
            closed = smoothed_loglik_gaussian(m.y_loglik_pointwise, Y, [0.2], [0.9], d,
                                              m.normal_params)
            quad = smoothed_loglik_gaussian(m.y_loglik_pointwise, Y, [0.2], [0.9], d)
            np.testing.assert_allclose(quad, closed, rtol=0, atol=1e-7)

    def test_generic_unimodal_density(self):
        # Laplace observation model has no closed-form convolution with a Gaussian kernel
        def lap(phi, theta, row):
            return -abs(row[0] - phi[0] - theta[0]) - math.log(2.0)

        Y = np.array([[0.4], [-1.1]])
        val = smoothed_loglik_gaussian(lap, Y, np.array([0.0]), np.array([0.2]), 0.6)
        ref = 0.0
        for yi in Y[:, 0]:
            f = lambda t, yi=yi: 0.5 * math.exp(-abs(t - 0.2)) * stats.norm.pdf(t, yi, 0.6)
            v, _ = integrate.quad(f, -30, 30, points=[0.2, yi], epsabs=0, epsrel=1e-12,
                                  limit=400)
            ref += math.log(v)
        np.testing.assert_allclose(val, ref, rtol=0, atol=1e-7)
