import math

import numpy as np
import pytest
from conftest import synthetic_mixture

from linkmi.baselines import ols_fit
from linkmi.comparison import ValidationError
from linkmi.emcore import EMConfig, weighted_least_squares
from linkmi.imputation import LinkedDataset
from linkmi.marginal import MarginalDensity, fit_normal_marginal
from linkmi.optimize import OptimizerConfig, nelder_mead
from linkmi.plmic import (
    e_step_plmic,
    fit_plmic,
    logistic_h,
    m_step_plmic,
    observed_loglik_plmic,
    q_plmic,
)

SIGMA2_FOR_PHI_04 = 1.0 / (2.0 * math.pi * 0.4**2)  # peak density 0.4
VAR_FOR_PY_01 = 1.0 / (2.0 * math.pi * 0.1**2)  # peak density 0.1


def single_row_dataset(y=1.3, seed_row=False):
    return LinkedDataset(
        x=np.zeros((1, 0)),
        y=np.array([y]),
        c=np.array([0.0]),
        is_seed=np.array([seed_row]),
        pairs=np.array([[0, 0]]),
    )


def peak_py(y):
    return MarginalDensity(kind="normal", mean=y, variance=VAR_FOR_PY_01)


class TestLogisticH:
    def test_zero_logit(self):
        assert logistic_h(0.0, (0.0, 0.0)) == 0.5
        assert logistic_h(0.0, (0.0, 1.0)) == 0.5

    def test_saturation(self):
        assert logistic_h(1e4, (0.0, 1.0)) == 1.0
        assert logistic_h(-1e4, (0.0, 1.0)) == 0.0

    def test_no_overflow(self):
        vals = logistic_h(np.array([-1e308, 1e308]), (0.0, 1.0))
        assert np.all(np.isfinite(vals))

    def test_monotone_when_slope_positive(self):
        c = np.linspace(-5, 5, 11)
        h = logistic_h(c, (0.3, 1.2))
        assert (np.diff(h) > 0).all()


class TestObservedLoglik:
    def test_hand_value(self):
        # phi = 0.4, p_Y = 0.1, h = 0.5 -> log(0.25)
        ds = single_row_dataset()
        ll = observed_loglik_plmic(
            ds, beta=[ds.y[0]], sigma2=SIGMA2_FOR_PHI_04,
            eta=(0.0, 1.0), p_y=peak_py(ds.y[0]),
        )
        assert abs(ll - math.log(0.25)) < 1e-12

    def test_h_one_reduces_to_regression(self, rng):
        ds, _ = synthetic_mixture(rng, n=60, true_frac=1.0)
        p_y = fit_normal_marginal(ds.y)
        beta = np.array([3.0, 3.0])
        ll = observed_loglik_plmic(ds, beta, 1.0, (1e3, 0.0), p_y)
        logphi = -0.5 * (
            np.log(2 * np.pi * 1.0)
            + (ds.y - ds.design_matrix() @ beta) ** 2
        )
        assert abs(ll - logphi.sum()) < 1e-9

    def test_h_zero_reduces_to_marginal(self, rng):
        ds, _ = synthetic_mixture(rng, n=60, true_frac=1.0)
        p_y = fit_normal_marginal(ds.y)
        ll = observed_loglik_plmic(ds, [3.0, 3.0], 1.0, (-1e3, 0.0), p_y)
        assert abs(ll - np.log(p_y.pdf(ds.y)).sum()) < 1e-9


class TestEStep:
    def test_hand_value(self):
        ds = single_row_dataset()
        p = e_step_plmic(
            ds, [ds.y[0]], SIGMA2_FOR_PHI_04, (0.0, 1.0), peak_py(ds.y[0])
        )
        assert abs(p[0] - 0.8) < 1e-12

    def test_equal_components_give_h(self, rng):
        ds, _ = synthetic_mixture(rng, n=40, true_frac=1.0)
        ds.y[:] = 0.7
        ds.c[:] = 0.4
        beta = np.array([0.7, 0.0])
        p_y = MarginalDensity(kind="normal", mean=0.7, variance=2.0)
        p = e_step_plmic(ds, beta, 2.0, (0.1, 1.0), p_y)
        h = logistic_h(0.4, (0.1, 1.0))
        assert np.allclose(p, h, atol=1e-12)

    def test_certain_prior_pins_one(self):
        ds = single_row_dataset()
        p = e_step_plmic(
            ds, [ds.y[0]], SIGMA2_FOR_PHI_04, (1e3, 0.0), peak_py(ds.y[0])
        )
        assert p[0] > 1.0 - 1e-9

    def test_seeds_pinned_and_range(self, rng):
        ds, _ = synthetic_mixture(rng, n=50, n_seeds=7)
        p_y = fit_normal_marginal(ds.y)
        p = e_step_plmic(ds, [0.0, 0.0], 4.0, (0.0, 1.0), p_y, clamp=1e-10)
        assert (p[ds.is_seed] == 1.0).all()
        free = p[~ds.is_seed]
        assert (free >= 1e-10).all() and (free <= 1 - 1e-10).all()


class TestQFunction:
    def test_q_separates_in_theta_and_eta(self, rng):
        ds, _ = synthetic_mixture(rng, n=30)
        p_y = fit_normal_marginal(ds.y)
        pt = rng.uniform(0.05, 0.95, size=ds.n)
        pt[ds.is_seed] = 1.0
        etas = [(-0.5, 0.8), (1.0, 2.0)]
        thetas = [([0.0, 1.0], 1.0), ([2.0, -1.0], 3.0)]
        # the eta-difference of Q must not depend on theta
        gaps = []
        for beta, s2 in thetas:
            gaps.append(
                q_plmic(ds, beta, s2, etas[0], pt, p_y)
                - q_plmic(ds, beta, s2, etas[1], pt, p_y)
            )
        assert abs(gaps[0] - gaps[1]) < 1e-9

    def test_em_identity_at_current_params(self, rng):
        # loglik = Q + entropy of the exact posterior, evaluated at the
        # same parameters
        ds, _ = synthetic_mixture(rng, n=40)
        p_y = fit_normal_marginal(ds.y)
        beta, s2, eta = np.array([2.5, 2.0]), 2.0, (0.2, 0.9)
        pt = e_step_plmic(ds, beta, s2, eta, p_y, clamp=1e-15)
        ll = observed_loglik_plmic(ds, beta, s2, eta, p_y)
        q = q_plmic(ds, beta, s2, eta, pt, p_y)
        free = ~ds.is_seed
        pf = pt[free]
        entropy = -(pf * np.log(pf) + (1 - pf) * np.log1p(-pf)).sum()
        assert abs(ll - (q + entropy)) < 1e-8
        assert q <= ll + 1e-10


class TestMStep:
    def test_unit_weights_give_ols(self, rng):
        ds, _ = synthetic_mixture(rng, n=80, true_frac=1.0)
        p_y = fit_normal_marginal(ds.y)
        pt = np.ones(ds.n)
        beta, s2, _ = m_step_plmic(ds, pt, p_y, None, None, (0.0, 1.0))
        direct = ols_fit(ds.design_matrix(), ds.y)
        assert np.allclose(beta, direct.beta, atol=1e-10)
        rss = direct.residuals @ direct.residuals
        assert abs(s2 - rss / ds.n) < 1e-12

    def test_binary_weights_select_subset(self, rng):
        ds, _ = synthetic_mixture(rng, n=60, true_frac=1.0)
        p_y = fit_normal_marginal(ds.y)
        pt = np.zeros(ds.n)
        pt[:35] = 1.0
        beta, _, _ = m_step_plmic(ds, pt, p_y, None, None, (0.0, 1.0))
        sub = ols_fit(ds.design_matrix()[:35], ds.y[:35])
        assert np.allclose(beta, sub.beta, atol=1e-10)

    def test_wls_matches_numerical_oracle(self, rng):
        ds, _ = synthetic_mixture(rng, n=50)
        pt = rng.uniform(0.1, 1.0, size=ds.n)
        design = ds.design_matrix()
        beta, s2 = weighted_least_squares(design, ds.y, pt, 4.0)

        def neg_q_theta(u):
            b, ls = u[:2], u[2]
            logphi = -0.5 * (
                np.log(2 * np.pi * math.exp(ls))
                + (ds.y - design @ b) ** 2 / math.exp(ls)
            )
            return -float(pt @ logphi)

        start = np.array([0.0, 0.0, 0.0])
        u, _ = nelder_mead(
            neg_q_theta, start, OptimizerConfig(f_tol=1e-14, max_evals=40_000)
        )
        assert np.allclose(u[:2], beta, atol=1e-5)
        assert abs(math.exp(u[2]) - s2) < 1e-5

    def test_degenerate_weights_rejected(self, rng):
        ds, _ = synthetic_mixture(rng, n=30)
        with pytest.raises(ValidationError):
            weighted_least_squares(
                ds.design_matrix(), ds.y, np.full(ds.n, 1e-6), 4.0
            )


class TestFitPlmic:
    def test_trace_monotone(self, rng):
        for k in range(8):
            ds, _ = synthetic_mixture(np.random.default_rng(k), n=150)
            p_y = fit_normal_marginal(ds.y)
            fit = fit_plmic(ds, p_y, EMConfig(restarts=1), rng=np.random.default_rng(k))
            diffs = np.diff(fit.loglik_trace)
            assert (diffs >= -1e-10).all()

    def test_forced_h_one_matches_ols(self, rng):
        ds, _ = synthetic_mixture(rng, n=250, true_frac=1.0)
        p_y = fit_normal_marginal(ds.y)
        fit = fit_plmic(ds, p_y, EMConfig(restarts=1), fix_eta=(500.0, 0.0), rng=rng)
        direct = ols_fit(ds.design_matrix(), ds.y)
        assert fit.converged
        assert np.allclose(fit.beta, direct.beta, atol=1e-6)
        se_ratio = np.sqrt(fit.var_beta) / direct.se
        assert np.all(np.abs(se_ratio - 1.0) < 0.02)

    def test_latent_probs_separate_truth(self, rng):
        ds, is_true = synthetic_mixture(rng, n=250, true_frac=0.6, c_gap=1.0)
        p_y = fit_normal_marginal(ds.y)
        fit = fit_plmic(ds, p_y, EMConfig(restarts=1), rng=rng)
        assert fit.converged
        assert fit.p_tilde[is_true].mean() > fit.p_tilde[~is_true].mean() + 0.2

    def test_row_permutation_invariance(self, rng):
        ds, _ = synthetic_mixture(rng, n=120, n_seeds=10)
        p_y = fit_normal_marginal(ds.y)
        fit_a = fit_plmic(ds, p_y, EMConfig(restarts=1), rng=np.random.default_rng(0))

        # permute seeds among themselves and non-seeds among themselves
        perm = np.concatenate([
            np.random.default_rng(1).permutation(10),
            10 + np.random.default_rng(2).permutation(ds.n - 10),
        ])
        ds_p = LinkedDataset(
            x=ds.x[perm], y=ds.y[perm], c=ds.c[perm],
            is_seed=ds.is_seed[perm], pairs=ds.pairs[perm],
        )
        fit_b = fit_plmic(ds_p, p_y, EMConfig(restarts=1), rng=np.random.default_rng(0))
        assert np.allclose(fit_a.beta, fit_b.beta, atol=1e-6)
        assert np.allclose(fit_a.link_params, fit_b.link_params, atol=1e-4)

    def test_deterministic_given_rng(self, rng):
        ds, _ = synthetic_mixture(rng, n=100)
        p_y = fit_normal_marginal(ds.y)
        a = fit_plmic(ds, p_y, EMConfig(restarts=3), rng=np.random.default_rng(7))
        b = fit_plmic(ds, p_y, EMConfig(restarts=3), rng=np.random.default_rng(7))
        assert np.array_equal(a.beta, b.beta)
        assert np.array_equal(a.loglik_trace, b.loglik_trace)

    def test_too_small_dataset_rejected(self, rng):
        ds, _ = synthetic_mixture(rng, n=3)
        p_y = fit_normal_marginal(ds.y)
        with pytest.raises(ValidationError):
            fit_plmic(ds, p_y)

    def test_covariance_is_symmetric(self, rng):
        ds, _ = synthetic_mixture(rng, n=150)
        p_y = fit_normal_marginal(ds.y)
        fit = fit_plmic(ds, p_y, EMConfig(restarts=1), rng=rng)
        assert fit.cov is not None
        assert np.allclose(fit.cov, fit.cov.T)
        assert (np.diag(fit.cov) > 0).all()
