import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from seqpg.stats import (
    StatsWarning,
    beta_hpd,
    beta_hpd_sampled,
    binomial_test,
    chisq_independence,
    equal_tail,
    mcnemar_test,
    two_prop_ztest,
)


def _binom_two_sided(k, n, p):
    """Sum of outcome probabilities no larger than the observed one."""
    pmf = [math.comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(n + 1)]
    return min(1.0, sum(q for q in pmf if q <= pmf[k] * (1 + 1e-7)))


def _pearson(a, b, c, d):
    n = a + b + c + d
    return n * (a * d - b * c) ** 2 / ((a + b) * (c + d) * (a + c) * (b + d))


class TestBinomial:
    def test_example(self):
        res = binomial_test(130, 240, 0.528)
        assert res.p_value == pytest.approx(0.698, abs=1e-3)

    @pytest.mark.parametrize("k,n,p", [(3, 10, 0.5), (0, 12, 0.2), (17, 20, 0.6), (45, 100, 0.528)])
    def test_against_direct_sum(self, k, n, p):
        assert binomial_test(k, n, p).p_value == pytest.approx(_binom_two_sided(k, n, p), rel=1e-9)

    @pytest.mark.parametrize("args", [(5, 4, 0.5), (-1, 4, 0.5), (2, 4, 0.0), (2, 4, 1.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            binomial_test(*args)


class TestHpd:
    def test_example(self):
        lo, hi = beta_hpd(130, 110)
        assert (lo, hi) == pytest.approx((0.479, 0.604), abs=1e-3)
        assert lo < 0.528 < hi

    def test_uniform_posterior_centered(self):
        assert beta_hpd(0, 0) == pytest.approx((0.025, 0.975))

    def test_monotone_posterior_one_sided(self):
        lo, hi = beta_hpd(0, 10)
        assert lo == 0.0
        assert sps.beta(1, 11).cdf(hi) == pytest.approx(0.95)

    def test_u_shaped_prior_falls_back(self):
        with pytest.warns(StatsWarning):
            assert beta_hpd(0, 0, 0.5, 0.5) == pytest.approx(equal_tail(0, 0, 0.5, 0.5))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 300), st.integers(1, 300))
    def test_shortest_and_equal_density(self, s, f):
        lo, hi = beta_hpd(s, f)
        dist = sps.beta(1 + s, 1 + f)
        assert dist.cdf(hi) - dist.cdf(lo) == pytest.approx(0.95, abs=1e-8)
        assert dist.logpdf(lo) == pytest.approx(dist.logpdf(hi), abs=1e-6)
        et_lo, et_hi = equal_tail(s, f)
        assert hi - lo <= et_hi - et_lo + 1e-12

    def test_sampled_close_to_analytic(self):
        lo, hi = beta_hpd(130, 110)
        slo, shi = beta_hpd_sampled(130, 110, seed=1)
        assert slo == pytest.approx(lo, abs=0.01)
        assert shi == pytest.approx(hi, abs=0.01)


class TestMcNemar:
    def test_asymmetric(self):
        assert mcnemar_test(40, 10).p_value < 1e-4

    def test_balanced(self):
        assert mcnemar_test(15, 15).p_value >= 0.9

    def test_statistic_with_correction(self):
        res = mcnemar_test(40, 10)
        assert res.statistic == pytest.approx(29 ** 2 / 50)

    def test_exact_branch(self):
        res = mcnemar_test(2, 9)
        assert res.name == "mcnemar-exact"
        assert res.p_value == pytest.approx(_binom_two_sided(2, 11, 0.5))

    def test_no_discordant_pairs(self):
        with pytest.warns(StatsWarning):
            assert mcnemar_test(0, 0).p_value == 1.0


class TestChiSquare:
    @pytest.mark.parametrize("table", [[[132, 28], [118, 42]], [[10, 20], [30, 5]], [[5, 5], [5, 6]]])
    def test_against_closed_form(self, table):
        (a, b), (c, d) = table
        res = chisq_independence(table)
        assert res.statistic == pytest.approx(_pearson(a, b, c, d), rel=1e-12)
        assert res.p_value == pytest.approx(sps.chi2.sf(_pearson(a, b, c, d), 1), rel=1e-9)

    def test_zero_marginal(self):
        with pytest.raises(ValueError):
            chisq_independence([[0, 0], [3, 4]])

    def test_shape(self):
        with pytest.raises(ValueError):
            chisq_independence([[1, 2, 3], [4, 5, 6]])

    @settings(max_examples=50)
    @given(st.integers(1, 80), st.integers(2, 100), st.integers(1, 80), st.integers(2, 100))
    def test_equals_squared_z(self, s1, n1, s2, n2):
        s1, s2 = min(s1, n1 - 1), min(s2, n2 - 1)
        chi = chisq_independence([[s1, n1 - s1], [s2, n2 - s2]])
        z = two_prop_ztest(s1, n1, s2, n2)
        assert chi.statistic == pytest.approx(z.statistic ** 2, rel=1e-9)
        assert chi.p_value == pytest.approx(z.p_value, rel=1e-7, abs=1e-300)


class TestZ:
    def test_position_effect_example(self):
        res = two_prop_ztest(5, 80, 165, 240)
        assert res.p_value < 1e-3
        assert res.statistic < 0

    def test_degenerate_pool(self):
        with pytest.warns(StatsWarning):
            assert two_prop_ztest(0, 10, 0, 20).p_value == 1.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            two_prop_ztest(11, 10, 1, 10)
