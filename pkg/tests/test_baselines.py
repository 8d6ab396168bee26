import numpy as np
import pytest

from linkmi.baselines import ols_estimate, ols_fit, perfect_ols, ts_ols
from linkmi.comparison import RecordFile, ValidationError
from linkmi.imputation import LinkedDataset


def make_dataset(rng, n=30, beta=(1.0, 2.0), sigma=0.5):
    x = rng.normal(size=(n, 1))
    y = beta[0] + beta[1] * x[:, 0] + sigma * rng.normal(size=n)
    return LinkedDataset(
        x=x,
        y=y,
        c=np.zeros(n),
        is_seed=np.zeros(n, dtype=bool),
        pairs=np.column_stack([np.arange(n), np.arange(n)]),
    )


class TestOlsFit:
    def test_exact_line(self):
        X = np.column_stack([np.ones(3), [1.0, 2.0, 3.0]])
        fit = ols_fit(X, np.array([2.0, 4.0, 6.0]))
        assert np.allclose(fit.beta, [0.0, 2.0], atol=1e-12)
        assert abs(fit.residuals @ fit.residuals) < 1e-24

    def test_intercept_shift_equivariance(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(20), rng.normal(size=20)])
        y = rng.normal(size=20)
        f0 = ols_fit(X, y)
        f1 = ols_fit(X, y + 5.0)
        assert abs(f1.beta[0] - (f0.beta[0] + 5.0)) < 1e-10
        assert abs(f1.beta[1] - f0.beta[1]) < 1e-10

    def test_matches_pseudo_inverse_oracle(self):
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(10), rng.normal(size=10)])
        y = rng.normal(size=10)
        fit = ols_fit(X, y)
        beta_pinv = np.linalg.pinv(X) @ y  # independent route
        assert np.allclose(fit.beta, beta_pinv, atol=1e-8)
        resid = y - X @ beta_pinv
        s2 = resid @ resid / (10 - 2)
        var = s2 * np.diag(np.linalg.inv(X.T @ X))
        assert np.allclose(fit.variances, var, atol=1e-10)

    def test_rank_deficient_rejected(self):
        X = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.raises(ValidationError):
            ols_fit(X, np.arange(5.0))

    def test_too_few_rows_rejected(self):
        X = np.column_stack([np.ones(2), [1.0, 2.0]])
        with pytest.raises(ValidationError):
            ols_fit(X, np.array([1.0, 2.0]))

    def test_conf_int_covers_estimate(self):
        rng = np.random.default_rng(2)
        X = np.column_stack([np.ones(40), rng.normal(size=40)])
        y = 1.0 + X[:, 1] + rng.normal(size=40)
        fit = ols_fit(X, y)
        ci = fit.conf_int(0.90)
        assert (ci[:, 0] < fit.beta).all()
        assert (fit.beta < ci[:, 1]).all()


class TestTsOls:
    def test_identical_datasets_zero_between(self):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng)
        pooled = ts_ols([ds, ds, ds])
        single = ols_fit(ds.design_matrix(), ds.y)
        for p in pooled:
            assert p.between == 0.0
            assert abs(p.estimate - single.beta[p.coef]) < 1e-12

    def test_two_datasets_hand_pooling(self):
        rng = np.random.default_rng(4)
        d1 = make_dataset(rng)
        d2 = make_dataset(rng)
        f1 = ols_fit(d1.design_matrix(), d1.y)
        f2 = ols_fit(d2.design_matrix(), d2.y)
        pooled = ts_ols([d1, d2])
        for coef in (0, 1):
            th = np.array([f1.beta[coef], f2.beta[coef]])
            vh = np.array([f1.variances[coef], f2.variances[coef]])
            tbar = th.mean()
            b = th.var(ddof=1)
            t_total = vh.mean() + 1.5 * b
            assert abs(pooled[coef].estimate - tbar) < 1e-12
            assert abs(pooled[coef].total - t_total) < 1e-12

    def test_seeds_are_ordinary_rows(self):
        rng = np.random.default_rng(5)
        ds = make_dataset(rng)
        seeded = LinkedDataset(
            x=ds.x,
            y=ds.y,
            c=ds.c,
            is_seed=np.ones(ds.n, dtype=bool),
            pairs=ds.pairs,
        )
        a = ols_estimate(ds)
        b = ols_estimate(seeded)
        assert np.allclose(a.theta, b.theta)
        assert np.allclose(a.variances, b.variances)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            ts_ols([])


class TestPerfect:
    def test_full_overlap_equals_joined_fit(self):
        rng = np.random.default_rng(6)
        n = 25
        x = rng.normal(size=(n, 1))
        y = 3.0 + 3.0 * x[:, 0] + rng.normal(size=n)
        f1 = RecordFile(linking=[["r"]] * n, x=x)
        f2 = RecordFile(linking=[["r"]] * n, y=y)
        truth = np.column_stack([np.arange(n), np.arange(n)])
        fit = perfect_ols(truth, f1, f2)
        direct = ols_fit(np.column_stack([np.ones(n), x]), y)
        assert np.allclose(fit.beta, direct.beta)

    def test_subset_of_truth(self):
        rng = np.random.default_rng(7)
        n = 30
        x = rng.normal(size=(n, 1))
        y = 1.0 - 2.0 * x[:, 0] + rng.normal(size=n)
        f1 = RecordFile(linking=[["r"]] * n, x=x)
        f2 = RecordFile(linking=[["r"]] * n, y=y)
        subset = np.column_stack([np.arange(10), np.arange(10)])
        fit = perfect_ols(subset, f1, f2)
        direct = ols_fit(np.column_stack([np.ones(10), x[:10]]), y[:10])
        assert np.allclose(fit.beta, direct.beta)

    def test_empty_truth_rejected(self):
        f1 = RecordFile(linking=[["r"]], x=np.zeros((1, 1)))
        f2 = RecordFile(linking=[["r"]], y=np.zeros(1))
        with pytest.raises(ValidationError):
            perfect_ols(np.zeros((0, 2)), f1, f2)
