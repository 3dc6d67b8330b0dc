import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from smurf.core import InvalidArgumentError
from smurf.pg import (
    C_MAX, PG_FLOOR, pg1_mean, pg1_var, pg1_var0, sample_pg1, sample_pg1_array, sample_pg1_truncated,
)

N = 100_000


def draws(c, n=N, seed=0):
    w, _ = sample_pg1_array(np.full(n, float(c)), np.random.default_rng(seed))
    return w


def series_moments(c, n_terms=200_000):
    """Mean and variance straight from W = (1/2pi^2) sum g_m / ((m - 1/2)^2 + c^2/(4 pi^2))."""
    m = np.arange(1, n_terms + 1)
    a = c / (2 * math.pi)
    d = (m - 0.5) ** 2 + a * a
    # midpoint-rule tail: sum over m > n of f(m - 1/2) ~ integral of f from n to infinity
    tail1 = (math.pi / 2 - math.atan(n_terms / a)) / a if a > 0 else 1 / n_terms
    tail2 = 1 / (3 * n_terms ** 3)
    return ((1 / (2 * math.pi ** 2)) * (np.sum(1 / d) + tail1),
            (1 / (4 * math.pi ** 4)) * (np.sum(1 / d ** 2) + tail2))


class TestAnalyticMoments:
    def test_mean_at_zero(self):
        assert pg1_mean(0) == 0.25

    def test_mean_at_two(self):
        assert pg1_mean(2) == pytest.approx(math.tanh(1) / 4, rel=1e-15)
        assert pg1_mean(2) == pytest.approx(0.190399, abs=1e-6)

    @given(st.floats(-1e4, 1e4))
    def test_mean_is_even(self, c):
        assert pg1_mean(-c) == pg1_mean(c)

    def test_var0(self):
        assert pg1_var0() == pytest.approx(1 / 24, rel=1e-15)
        assert pg1_var(0.0) == pg1_var0()

    @pytest.mark.parametrize("c", [0.0, 1e-4, 0.5, 1.0, 2.0, 4.0, 10.0, 50.0])
    def test_closed_forms_match_series(self, c):
        mean, var = series_moments(c)
        assert pg1_mean(c) == pytest.approx(mean, rel=1e-5)
        assert pg1_var(c) == pytest.approx(var, rel=1e-5)

    @given(st.floats(1e-6, 5e-3))
    def test_small_c_branches_are_continuous(self, c):
        exact_mean = math.tanh(c / 2) / (2 * c)
        assert pg1_mean(c) == pytest.approx(exact_mean, rel=1e-9)
        assert pg1_var(c) == pytest.approx(1 / 24 - c * c / 120, rel=1e-9)


class TestSampler:
    def test_mean_at_zero(self):
        assert abs(draws(0).mean() - 0.25) < 0.005

    def test_mean_at_two(self):
        assert abs(draws(2).mean() - math.tanh(1) / 4) < 0.005

    def test_variance_at_zero(self):
        assert abs(draws(0).var(ddof=1) - 1 / 24) < 0.002

    def test_tilting_shrinks_variance(self):
        assert draws(4, seed=1).var() < draws(0, seed=2).var()

    @pytest.mark.parametrize("c", [0.0, 0.5, 1.0, 2.0, 4.0, 20.0, 300.0])
    def test_mean_within_four_standard_errors(self, c):
        w = draws(c, seed=int(10 * c) + 3)
        se = math.sqrt(pg1_var(c) / w.size)
        assert abs(w.mean() - pg1_mean(c)) < 4 * se

    @pytest.mark.parametrize("c", [0.5, 2.0, 8.0])
    def test_variance_matches_closed_form(self, c):
        w = draws(c, seed=7)
        assert w.var(ddof=1) == pytest.approx(pg1_var(c), rel=0.03)

    def test_sign_of_c_irrelevant(self):
        res = stats.ks_2samp(draws(3, 10_000, seed=4), draws(-3, 10_000, seed=5))
        assert res.pvalue > 0.01

    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_laplace_transform_at_zero_tilt(self, t):
        e = np.exp(-t * draws(0, seed=11))
        expected = 1 / math.cosh(math.sqrt(t / 2))
        assert abs(e.mean() - expected) < 3 * e.std(ddof=1) / math.sqrt(e.size)

    def test_printed_transform_contradicts_unit_quarter_mean(self):
        # 1/cosh(sqrt(t)/2) has derivative -1/8 at t = 0, i.e. a mean of 1/8
        e = np.exp(-1.0 * draws(0, seed=11))
        se = e.std(ddof=1) / math.sqrt(e.size)
        assert abs(e.mean() - 1 / math.cosh(0.5)) > 20 * se

    def test_agrees_with_truncated_series(self):
        rng = np.random.default_rng(9)
        trunc = np.array([sample_pg1_truncated(2.0, rng) for _ in range(20_000)])
        exact = draws(2.0, 20_000, seed=10)
        assert stats.ks_2samp(trunc, exact).pvalue > 0.01
        # the truncated series is biased low by its omitted tail only
        assert trunc.mean() == pytest.approx(pg1_mean(2.0), abs=4 * math.sqrt(pg1_var(2.0) / 20_000) + 1e-3)

    def test_truncated_needs_enough_terms(self):
        with pytest.raises(InvalidArgumentError):
            sample_pg1_truncated(1.0, np.random.default_rng(0), n_terms=50)

    def test_scalar_and_array_share_the_stream(self):
        a = sample_pg1(1.5, np.random.default_rng(3))
        b, _ = sample_pg1_array(np.array([1.5]), np.random.default_rng(3))
        assert a == b[0]

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-50, 50), st.integers(0, 2**63))
    def test_deterministic_and_positive(self, c, seed):
        a = draws(c, 50, seed)
        b = draws(c, 50, seed)
        assert np.array_equal(a, b)
        assert np.all(np.isfinite(a)) and np.all(a >= PG_FLOOR)

    def test_floor_clamps_and_counts(self):
        c = np.full(1000, 2000.0)
        w, n_clamped = sample_pg1_array(c, np.random.default_rng(0), floor=1e-3)
        assert np.all(w >= 1e-3)
        assert n_clamped == np.sum(w == 1e-3) > 0

    @pytest.mark.parametrize("bad", [math.nan, math.inf, C_MAX * 1.01])
    def test_rejects_bad_tilt(self, bad):
        with pytest.raises(InvalidArgumentError):
            sample_pg1(bad, np.random.default_rng(0))
        with pytest.raises(InvalidArgumentError):
            sample_pg1_array(np.array([0.0, bad]), np.random.default_rng(0))

    def test_cap_is_inclusive(self):
        assert sample_pg1(C_MAX, np.random.default_rng(0)) > 0
