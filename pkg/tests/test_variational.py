import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from ccvb.stats import GammaDist, MultivariateGaussian
from ccvb.variational import (
    DiagonalGaussian,
    cavi_mean_field_gaussian,
    gamma_posterior_update,
    kl_diag_to_full,
    mean_field_gaussian,
)

DEMO_RHOS = (-0.1, -0.025, 0.025, 0.1)


def exchangeable(rho, mean=(0.0, 0.0)):
    return MultivariateGaussian(mean, [[1.0, rho], [rho, 1.0]])


def pd_2x2():
    return st.tuples(st.floats(0.2, 3.0), st.floats(0.2, 3.0), st.floats(-0.95, 0.95),
                     st.floats(-2, 2), st.floats(-2, 2))


def build(params):
    s1, s2, corr, m1, m2 = params
    cov = [[s1 * s1, corr * s1 * s2], [corr * s1 * s2, s2 * s2]]
    return MultivariateGaussian([m1, m2], cov)


class TestMeanField:
    @pytest.mark.parametrize("rho", [-0.1, 0.1])
    def test_demo_covariance(self, rho):
        # Lambda = Sigma^-1 for [[1, r], [r, 1]] has diagonal 1 / (1 - r^2)
        q = mean_field_gaussian(exchangeable(rho))
        np.testing.assert_array_equal(q.means, [0.0, 0.0])
        np.testing.assert_allclose(q.variances, [0.99, 0.99], atol=1e-12)

    def test_diagonal_target(self):
        target = MultivariateGaussian([1.0, -1.0], np.diag([2.0, 0.5]))
        q = mean_field_gaussian(target)
        np.testing.assert_allclose(q.variances, [2.0, 0.5], atol=1e-14)
        assert kl_diag_to_full(q, target) == pytest.approx(0.0, abs=1e-14)

    def test_against_numerical_kl_minimisation(self):
        target = MultivariateGaussian([0.4, -0.3], [[1.5, 0.6], [0.6, 0.9]])

        def objective(theta):
            q = DiagonalGaussian(theta[:2], np.exp(theta[2:]))
            return kl_diag_to_full(q, target)

        res = optimize.minimize(objective, np.zeros(4), method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
        q = mean_field_gaussian(target)
        np.testing.assert_allclose(res.x[:2], q.means, atol=1e-5)
        np.testing.assert_allclose(np.exp(res.x[2:]), q.variances, atol=1e-5)

    @pytest.mark.parametrize("rho", [-0.9, -0.1, 0.0, 0.3, 0.9])
    def test_variance_underestimation(self, rho):
        q = mean_field_gaussian(exchangeable(rho))
        np.testing.assert_allclose(q.variances, 1 - rho * rho, atol=1e-12)
        if rho == 0.0:
            np.testing.assert_allclose(q.variances, 1.0, atol=1e-15)
        else:
            assert np.all(q.variances < 1.0)


class TestCavi:
    @given(pd_2x2())
    @settings(max_examples=60, deadline=None)
    def test_agrees_with_closed_form(self, params):
        target = build(params)
        q, report = cavi_mean_field_gaussian(target)
        closed = mean_field_gaussian(target)
        assert report.converged
        np.testing.assert_allclose(q.means, closed.means, atol=1e-8)
        np.testing.assert_allclose(q.variances, closed.variances, atol=1e-8)

    @given(pd_2x2(), st.floats(-3, 3), st.floats(-3, 3))
    @settings(max_examples=60, deadline=None)
    def test_kl_nonincreasing(self, params, o1, o2):
        target = build(params)
        q, report = cavi_mean_field_gaussian(target, init_means=target.mean + [o1, o2])
        hist = np.array(report.kl_history)
        assert np.all(np.diff(hist) <= 1e-12)
        assert report.final_kl >= 0.0

    def test_diagonal_converges_in_one_sweep(self):
        target = MultivariateGaussian([0.5, 2.0], np.diag([1.0, 3.0]))
        q, report = cavi_mean_field_gaussian(target)
        assert report.converged and report.iterations == 1
        assert report.final_kl == pytest.approx(0.0, abs=1e-14)

    def test_diagonal_from_offset_start_fixed_after_first_sweep(self):
        target = MultivariateGaussian([0.5, 2.0], np.diag([1.0, 3.0]))
        q, report = cavi_mean_field_gaussian(target, init_means=[3.0, -1.0])
        assert report.kl_history[1] == pytest.approx(0.0, abs=1e-14)
        assert report.converged

    def test_demo_covariance(self):
        q, report = cavi_mean_field_gaussian(exchangeable(-0.1))
        np.testing.assert_allclose(q.variances, [0.99, 0.99], atol=1e-8)
        assert report.converged

    def test_forced_early_stop(self):
        target = exchangeable(0.9)
        q, report = cavi_mean_field_gaussian(target, tol=1e-14, max_iter=2, init_means=[1.0, 1.0])
        assert not report.converged
        assert report.iterations == 2

    def test_converged_implies_small_decrement(self):
        target = exchangeable(0.7)
        q, report = cavi_mean_field_gaussian(target, tol=1e-10, init_means=[1.0, -1.0])
        assert report.converged
        assert report.kl_history[-2] - report.kl_history[-1] < 1e-10

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            cavi_mean_field_gaussian(exchangeable(0.1), tol=0.0)


class TestKl:
    def test_identity(self):
        p = MultivariateGaussian([0.0], [[1.0]])
        assert kl_diag_to_full(DiagonalGaussian([0.0], [1.0]), p) == 0.0

    def test_shifted_unit_variance(self):
        p = MultivariateGaussian([0.0], [[1.0]])
        assert kl_diag_to_full(DiagonalGaussian([1.0], [1.0]), p) == pytest.approx(0.5, abs=1e-15)

    def test_1d_against_quadrature(self):
        mq, vq, mp, vp = 0.3, 0.5, -0.2, 1.7

        def integrand(x):
            lq = -0.5 * (x - mq) ** 2 / vq - 0.5 * math.log(2 * math.pi * vq)
            lp = -0.5 * (x - mp) ** 2 / vp - 0.5 * math.log(2 * math.pi * vp)
            return math.exp(lq) * (lq - lp)

        ref, _ = integrate.quad(integrand, -30, 30, epsabs=1e-13)
        got = kl_diag_to_full(DiagonalGaussian([mq], [vq]), MultivariateGaussian([mp], [[vp]]))
        assert got == pytest.approx(ref, abs=1e-10)

    def test_demo_case_positive_and_locally_optimal(self):
        p = exchangeable(-0.1)
        best = kl_diag_to_full(DiagonalGaussian([0, 0], [0.99, 0.99]), p)
        assert best > 0
        for d1 in (-0.05, 0.0, 0.05):
            for d2 in (-0.05, 0.0, 0.05):
                assert kl_diag_to_full(DiagonalGaussian([0, 0], [0.99 + d1, 0.99 + d2]), p) >= best

    @pytest.mark.parametrize("rho", DEMO_RHOS)
    def test_strict_optimality_under_perturbation(self, rho):
        p = exchangeable(rho)
        q = mean_field_gaussian(p)
        best = kl_diag_to_full(q, p)
        for i in range(2):
            for sign in (-1, 1):
                v = q.variances.copy()
                v[i] *= 1 + sign * 0.05
                assert kl_diag_to_full(DiagonalGaussian(q.means, v), p) > best
                m = q.means.copy()
                m[i] += sign * 0.05
                assert kl_diag_to_full(DiagonalGaussian(m, q.variances), p) > best

    def test_zero_only_for_equal_distributions(self):
        p = exchangeable(0.1)
        assert kl_diag_to_full(mean_field_gaussian(p), p) > 0
        diag = MultivariateGaussian([1, 2], np.diag([0.5, 2.0]))
        assert kl_diag_to_full(DiagonalGaussian([1, 2], [0.5, 2.0]), diag) == pytest.approx(0.0, abs=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            kl_diag_to_full(DiagonalGaussian([0.0], [1.0]), exchangeable(0.0))


class TestGammaUpdate:
    def test_no_data(self):
        prior = GammaDist(2.0, 3.0)
        assert gamma_posterior_update(prior, 0, 0.0) == prior

    def test_update(self):
        assert gamma_posterior_update(GammaDist(1, 1), 10, 2.5) == GammaDist(11, 3.5)

    @pytest.mark.parametrize("prior,count,total", [((1, 1), 10, 2.5), ((2.0, 0.5), 25, 7.0), ((1.0, 0.01), 30, 2.0)])
    def test_matches_grid_posterior(self, prior, count, total):
        prior = GammaDist(*prior)
        grid = np.linspace(0.01, 50, 400001)
        unnorm = prior.logpdf(grid) + count * np.log(grid) - total * grid
        dens = np.exp(unnorm - unnorm.max())
        dens /= integrate.trapezoid(dens, grid)
        post = gamma_posterior_update(prior, count, total)
        assert np.max(np.abs(dens - np.exp(post.logpdf(grid)))) <= 1e-6

    def test_large_n_approaches_mle(self):
        rng = np.random.default_rng(0)
        x = rng.exponential(1 / 16, size=10**5)
        post = gamma_posterior_update(GammaDist(1, 0.01), x.size, float(x.sum()))
        mle = x.size / x.sum()
        assert abs(post.mean - mle) / mle <= 0.01

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            gamma_posterior_update(GammaDist(1, 1), -1, 1.0)
        with pytest.raises(ValueError):
            gamma_posterior_update(GammaDist(1, 1), 1, -1.0)
