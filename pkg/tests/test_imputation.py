import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkmi.comparison import (
    FieldSpec,
    RecordFile,
    ValidationError,
    build_comparison_matrix,
)
from linkmi.gibbs import GibbsConfig, confidence_measure, run_gibbs
from linkmi.imputation import (
    PerDatasetEstimate,
    extract_all,
    extract_linked_dataset,
    pool_all,
    pool_rubin,
)


def small_chain_setup(seed=0, n=4):
    rng = np.random.default_rng(seed)
    names = ["ann", "bob", "carol", "dave", "erin", "fred"]
    linking = [[names[k], str(30 + k)] for k in range(n)]
    f1 = RecordFile(linking=[list(r) for r in linking], x=rng.normal(size=(n, 1)))
    f2 = RecordFile(linking=[list(r) for r in linking], y=rng.normal(size=n))
    specs = [FieldSpec("name", "levenshtein", (0.25, 0.5, 1.0)), FieldSpec("age", "exact")]
    gamma = build_comparison_matrix(f1, f2, specs)
    chain = run_gibbs(gamma, GibbsConfig(iterations=30, burn_in=10), rng=rng)
    return chain, f1, f2, gamma


class TestExtract:
    def test_rows_match_provenance(self):
        chain, f1, f2, gamma = small_chain_setup()
        for k in range(len(chain)):
            ds = extract_linked_dataset(chain, k, f1, f2, gamma)
            assert ds.n == int((chain.z[k] < chain.n1).sum())
            for r in range(ds.n):
                i, j = ds.pairs[r]
                assert ds.x[r, 0] == f1.x[i, 0]
                assert ds.y[r] == f2.y[j]

    def test_confidence_uses_same_draw(self):
        chain, f1, f2, gamma = small_chain_setup(seed=1)
        k = 3
        ds = extract_linked_dataset(chain, k, f1, f2, gamma)
        params = chain.params(k)
        for r in range(ds.n):
            i, j = ds.pairs[r]
            want = confidence_measure(gamma.levels[i, j], params)
            assert abs(ds.c[r] - want) < 1e-12

    def test_seeds_first_and_flagged(self):
        chain, f1, f2, gamma = small_chain_setup(seed=2)
        # seed the pair (1, 1) and rebuild the chain with it held fixed
        seeds = {1: 1}
        chain = run_gibbs(
            gamma, GibbsConfig(iterations=30, burn_in=10), seeds,
            rng=np.random.default_rng(3),
        )
        for k in range(len(chain)):
            ds = extract_linked_dataset(chain, k, f1, f2, gamma, seeds)
            assert ds.is_seed[0]
            assert ds.pairs[0].tolist() == [1, 1]
            assert ds.is_seed.sum() == 1

    def test_empty_draw_gives_empty_dataset(self):
        chain, f1, f2, gamma = small_chain_setup(seed=4)
        chain.z[0, :] = chain.n1 + np.arange(chain.n2)
        ds = extract_linked_dataset(chain, 0, f1, f2, gamma)
        assert ds.n == 0

    def test_out_of_range_draw_rejected(self):
        chain, f1, f2, gamma = small_chain_setup(seed=5)
        f1_small = RecordFile(linking=f1.linking[:2], x=f1.x[:2])
        chain.z[0, 0] = 3
        with pytest.raises(ValidationError):
            extract_linked_dataset(chain, 0, f1_small, f2, gamma)

    def test_requires_study_columns(self):
        chain, f1, f2, gamma = small_chain_setup(seed=6)
        bare = RecordFile(linking=f1.linking)
        with pytest.raises(ValidationError):
            extract_linked_dataset(chain, 0, bare, f2, gamma)

    def test_extract_all_stride(self):
        chain, f1, f2, gamma = small_chain_setup(seed=7)
        full = extract_all(chain, f1, f2, gamma)
        thinned = extract_all(chain, f1, f2, gamma, stride=4)
        assert len(full) == len(chain)
        assert len(thinned) == math.ceil(len(chain) / 4)
        with pytest.raises(ValidationError):
            extract_all(chain, f1, f2, gamma, stride=0)


def est(theta, var, converged=True):
    return PerDatasetEstimate(
        theta=np.atleast_1d(np.asarray(theta, dtype=float)),
        variances=np.atleast_1d(np.asarray(var, dtype=float)),
        converged=converged,
    )


class TestPoolRubin:
    def test_hand_example(self):
        pooled = pool_rubin([est(1.0, 1.0), est(3.0, 1.0)], 0)
        assert pooled.estimate == 2.0
        assert pooled.within == 1.0
        assert pooled.between == 2.0
        assert pooled.total == 4.0
        assert pooled.df == 16.0 / 9.0

    def test_identical_estimates_degenerate(self):
        pooled = pool_rubin([est(2.5, 0.7)] * 5, 0)
        assert pooled.between == 0.0
        assert pooled.total == 0.7
        assert math.isinf(pooled.df)
        # normal quantile at 90%
        half = (pooled.hi - pooled.lo) / 2.0
        assert abs(half - 1.6448536269514722 * math.sqrt(0.7)) < 1e-10

    def test_scaling_homogeneity(self):
        base = [est(1.0, 1.0), est(3.0, 1.0), est(2.0, 2.0)]
        scaled = [est(e.theta * 10.0, e.variances * 100.0) for e in base]
        p0 = pool_rubin(base, 0)
        p1 = pool_rubin(scaled, 0)
        assert abs(p1.estimate - 10.0 * p0.estimate) < 1e-12
        assert abs(math.sqrt(p1.total) - 10.0 * math.sqrt(p0.total)) < 1e-12
        assert abs(p1.df - p0.df) < 1e-12

    def test_permutation_invariance(self):
        ests = [est(1.0, 0.5), est(2.0, 0.25), est(5.0, 1.5), est(3.0, 1.0)]
        a = pool_rubin(ests, 0)
        b = pool_rubin(ests[::-1], 0)
        assert a.estimate == b.estimate
        assert a.total == b.total
        assert a.df == b.df

    def test_drops_nonconverged(self):
        ests = [est(1.0, 1.0), est(3.0, 1.0), est(99.0, 1.0, converged=False)]
        pooled = pool_rubin(ests, 0)
        assert pooled.estimate == 2.0

    def test_needs_two_converged(self):
        with pytest.raises(ValidationError):
            pool_rubin([est(1.0, 1.0)], 0)
        with pytest.raises(ValidationError):
            pool_rubin([est(1.0, 1.0), est(2.0, 1.0, converged=False)], 0)

    def test_interval_centred_and_total_dominates_within(self):
        ests = [est([1.0, 4.0], [0.3, 0.1]), est([2.0, 6.0], [0.4, 0.2])]
        for coef in (0, 1):
            p = pool_rubin(ests, coef)
            assert abs((p.lo + p.hi) / 2.0 - p.estimate) < 1e-12
            assert p.total >= p.within

    @given(
        st.lists(
            st.tuples(
                st.floats(-50, 50),
                st.floats(0.01, 10.0),
            ),
            min_size=2,
            max_size=12,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_t_geq_within_property(self, pairs):
        ests = [est(t, v) for t, v in pairs]
        p = pool_rubin(ests, 0)
        assert p.total >= p.within - 1e-12
        assert p.lo <= p.estimate <= p.hi

    def test_width_monotone_in_between_variance(self):
        # hold within fixed, spread the estimates further apart
        narrow = [est(0.0, 1.0), est(1.0, 1.0)]
        wide = [est(-2.0, 1.0), est(3.0, 1.0)]
        pn = pool_rubin(narrow, 0)
        pw = pool_rubin(wide, 0)
        assert (pw.hi - pw.lo) > (pn.hi - pn.lo)

    def test_pool_all_shapes(self):
        ests = [est([1.0, 2.0], [0.1, 0.2]), est([2.0, 1.0], [0.1, 0.2])]
        pooled = pool_all(ests)
        assert [p.coef for p in pooled] == [0, 1]
