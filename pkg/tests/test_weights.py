import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import bisect, chi_cdf_mp, folded_normal_cdf_mp, normal_cdf_mp
from sgscreen.core import InvalidArgumentError, NumericalError, build_groups
from sgscreen.weights import (SCHEMES, PenaltyWeights, WeightConfig, chi_cdf, folded_normal_cdf, gslope_max_weights,
                              gslope_mean_weights, inverse_cdf, make_weights, normal_cdf, oscar_sigma1,
                              oscar_weights, quantile, sgs_max_weights, sgs_mean_weights, slope_bh_weights)


def groups_from_sizes(sizes):
    return build_groups(np.repeat(np.arange(len(sizes)), sizes))


def random_sizes(seed, m, lo=3, hi=25):
    return np.random.default_rng(seed).integers(lo, hi + 1, size=m)


class TestCdfs:
    @pytest.mark.parametrize("df", [1, 2, 5, 17])
    @pytest.mark.parametrize("x", [0.1, 0.9, 2.5, 6.0])
    def test_chi_against_mpmath(self, x, df):
        assert chi_cdf(x, df) == pytest.approx(chi_cdf_mp(x, df), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("x", [0.01, 0.7, 1.96, 4.0])
    def test_folded_and_normal(self, x):
        assert folded_normal_cdf(x) == pytest.approx(folded_normal_cdf_mp(x), rel=1e-12)
        assert normal_cdf(-x) == pytest.approx(normal_cdf_mp(-x), rel=1e-12)

    def test_chi1_is_half_normal(self):
        x = np.linspace(0, 5, 11)
        np.testing.assert_allclose(chi_cdf(x, 1), folded_normal_cdf(x), atol=1e-14)


class TestInverseCdf:
    def test_normal_median(self):
        assert inverse_cdf(normal_cdf, 0.5, (-10, 10)) == pytest.approx(0.0, abs=1e-10)

    def test_chi1(self):
        target = 2 * normal_cdf(1.96) - 1
        assert inverse_cdf(lambda x: chi_cdf(x, 1), target, (0, 10)) == pytest.approx(1.96, abs=1e-8)

    def test_folded_at_zero(self):
        assert inverse_cdf(folded_normal_cdf, 0.0, (0, 10)) == 0.0

    def test_bad_bracket(self):
        with pytest.raises(NumericalError):
            inverse_cdf(normal_cdf, 0.99, (-1, 1))

    def test_quantile_widens(self):
        assert quantile(normal_cdf, 1 - 1e-12) == pytest.approx(7.034484, abs=1e-5)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5), st.integers(1, 20))
    def test_roundtrip(self, x, df):
        assert inverse_cdf(normal_cdf, float(normal_cdf(x)), (-10, 10)) == pytest.approx(x, abs=1e-8)
        if x > 0.05:
            cdf = lambda t: float(chi_cdf(t, df))
            assert inverse_cdf(cdf, cdf(x), (0, 20)) == pytest.approx(x, abs=1e-8)


class TestGslopeWeights:
    def test_singletons_are_half_normal_quantiles(self):
        g = groups_from_sizes([1, 1])
        w = gslope_mean_weights(g, 0.05)
        for i, wi in enumerate(w, start=1):
            ref = bisect(lambda x: chi_cdf_mp(x, 1), 1 - 0.05 * i / 2, 0, 10)
            assert wi == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("size", [1, 4, 9])
    def test_single_group(self, size):
        w = gslope_mean_weights(groups_from_sizes([size]), 0.1)
        ref = bisect(lambda x: chi_cdf_mp(np.sqrt(size) * x, size), 0.9, 0, 10)
        assert w.shape == (1,) and w[0] == pytest.approx(ref, abs=1e-8)

    def test_mean_monotone_for_mixed_sizes(self):
        w = gslope_mean_weights(groups_from_sizes(random_sizes(0, 20)), 0.05)
        assert np.all(np.diff(w) <= 0) and np.all(w > 0)

    def test_max_equal_sizes_matches_mean(self):
        g = groups_from_sizes([4] * 6)
        np.testing.assert_allclose(gslope_max_weights(g, 0.1), gslope_mean_weights(g, 0.1), rtol=1e-9)

    def test_max_two_sizes(self):
        g = groups_from_sizes([1, 4])
        w = gslope_max_weights(g, 0.1)
        for i in (1, 2):
            t = 1 - 0.1 * i / 2
            ref = max(bisect(lambda x: chi_cdf_mp(x, s), t, 0, 20) / np.sqrt(s) for s in (1, 4))
            assert w[i - 1] == pytest.approx(ref, abs=1e-8)

    @pytest.mark.parametrize("seed", range(5))
    def test_max_dominates_mean(self, seed):
        g = groups_from_sizes(random_sizes(seed, 15, 1, 12))
        assert np.all(gslope_max_weights(g, 0.05) >= gslope_mean_weights(g, 0.05) - 1e-10)


class TestSgsWeights:
    def test_alpha_to_one_gives_bh(self):
        g = groups_from_sizes([1] * 8)
        pw = sgs_mean_weights(g, 0.05, 0.05, 1 - 1e-9)
        np.testing.assert_allclose(pw.v, slope_bh_weights(8, 0.05), atol=1e-6)

    def test_paper_configuration(self):
        g = groups_from_sizes([5] * 100)
        pw = sgs_mean_weights(g, 0.05, 0.05, 0.95)
        assert pw.v.shape == (500,) and pw.w.shape == (100,)
        assert np.all(np.diff(pw.v) <= 0) and np.all(pw.v > 0)

    def test_floor_term(self):
        assert np.floor(0.95 * 3) == 2

    def test_endpoints_rejected(self):
        g = groups_from_sizes([2, 2])
        for a in (0.0, 1.0):
            with pytest.raises(InvalidArgumentError):
                sgs_mean_weights(g, 0.05, 0.05, a)

    def test_group_scheme_switch(self):
        g = groups_from_sizes([3, 5, 2, 4])
        for divisor in ("p", "m"):
            pw = sgs_mean_weights(g, 0.1, 0.1, 0.5, group_scheme="sgs", group_divisor=divisor)
            assert np.all(np.diff(pw.w) <= 0) and np.all(pw.w >= 0)

    def test_max_matches_direct_loops(self):
        g = groups_from_sizes([3, 1, 4])
        q_v, q_g, alpha = 0.1, 0.2, 0.6
        pw = sgs_max_weights(g, q_v, q_g, alpha)
        w0 = gslope_max_weights(g, q_g)
        a = np.floor(alpha * g.sizes)
        p, m = g.p, g.m
        v = np.empty(p)
        for i in range(1, p + 1):
            z = bisect(normal_cdf_mp, 1 - q_v * i / (2 * p), -20, 20)
            v[i - 1] = max((z - (1 - alpha) * a[j] * w0[j] / 3) / alpha for j in range(m))
        v = np.minimum.accumulate(np.maximum(v, 0))
        np.testing.assert_allclose(pw.v, v, atol=1e-8)
        w = np.empty(m)
        for i in range(1, m + 1):
            z = bisect(folded_normal_cdf_mp, 1 - q_g * i / m, 0, 20)
            w[i - 1] = max((z - alpha * v[g.group_index[j]].sum()) / ((1 - alpha) * g.sizes[j]) for j in range(m))
        np.testing.assert_allclose(pw.w, np.minimum.accumulate(np.maximum(w, 0)), atol=1e-8)

    @pytest.mark.parametrize("seed", range(6))
    def test_max_nonneg_nonincreasing(self, seed):
        rng = np.random.default_rng(seed)
        g = groups_from_sizes(random_sizes(seed, int(rng.integers(2, 12)), 1, 10))
        pw = sgs_max_weights(g, rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3), rng.uniform(0.05, 0.95))
        for seq in (pw.v, pw.w):
            assert np.all(seq >= 0) and np.all(np.diff(seq) <= 0)


class TestOscar:
    def test_variable_example(self):
        np.testing.assert_allclose(oscar_weights(4, 2, 1.0).v, [1.75, 1.5, 1.25, 1.0])

    def test_group_example(self):
        np.testing.assert_allclose(oscar_weights(4, 2, 1.0).w, [1.5, 1.0])

    def test_last_is_sigma1(self):
        assert oscar_weights(9, 3, 2.5).v[-1] == 2.5

    @pytest.mark.parametrize("p,m,s", [(10, 3, 1.0), (64, 8, 0.3), (7, 7, 4.0)])
    def test_second_differences_zero(self, p, m, s):
        pw = oscar_weights(p, m, s)
        np.testing.assert_allclose(np.diff(pw.v, 2), 0, atol=1e-12)
        np.testing.assert_allclose(np.diff(pw.w, 2), 0, atol=1e-12)

    def test_sigma1_default(self):
        X = np.eye(3)
        assert oscar_sigma1(X, [1.0, -4.0, 2.0]) == pytest.approx(4 * np.exp(-2))

    def test_bad_sigma(self):
        with pytest.raises(InvalidArgumentError):
            oscar_weights(3, 1, 0.0)


class TestContainers:
    def test_increasing_rejected(self):
        with pytest.raises(InvalidArgumentError):
            PenaltyWeights(v=np.array([1.0, 2.0]))

    def test_negative_rejected(self):
        with pytest.raises(InvalidArgumentError):
            PenaltyWeights(w=np.array([1.0, -0.1]))

    def test_frozen(self):
        pw = PenaltyWeights(v=np.array([2.0, 1.0]))
        with pytest.raises(ValueError):
            pw.v[0] = 5.0

    @pytest.mark.parametrize("kwargs", [dict(q_v=0.0), dict(q_g=1.0), dict(alpha=1.5), dict(scheme="nope")])
    def test_config_validation(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            WeightConfig(**kwargs)

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_make_weights(self, scheme):
        g = groups_from_sizes([3, 1, 4, 2])
        pw = make_weights(WeightConfig(scheme=scheme, alpha=0.9), g)
        for seq in (pw.v, pw.w):
            if seq is not None:
                assert np.all(seq >= 0) and np.all(np.diff(seq) <= 1e-12)
