import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksconf import (InvalidParameterError, NotTabulatedError, TestConfig, batch_test,
                    build_calibration, ks_statistic, threshold)
from ksconf.kstest import ks_statistic_rows, resolve_threshold, threshold_table

ALPHAS = [1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 0.01, 0.05, 0.1, 0.5]
MS = [1, 3, 5, 10, 30, 50, 100, 300, 500, 1000, 3000, 5000, 10000]


def brute_force_ks(u):
    """sup |F_m(x) - x| by counting at every jump point, from both sides."""
    u = np.asarray(u)
    m = u.size
    best = 0.0
    for x in np.concatenate((u, [0.0, 1.0])):
        right = np.count_nonzero(u <= x) / m
        left = np.count_nonzero(u < x) / m
        best = max(best, abs(right - x), abs(left - x))
    return best


def test_single_value():
    assert ks_statistic([0.5]) == 0.5


@pytest.mark.parametrize("m", [1, 2, 7, 100, 1000])
def test_midpoint_grid(m):
    grid = (np.arange(1, m + 1) - 0.5) / m
    assert ks_statistic(grid) == pytest.approx(1 / (2 * m), abs=1e-15)


def test_empty_batch():
    with pytest.raises(InvalidParameterError):
        ks_statistic([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60))
def test_matches_brute_force(xs):
    assert abs(ks_statistic(xs) - brute_force_ks(xs)) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=60), st.randoms())
def test_permutation_invariant(xs, r):
    ys = list(xs)
    r.shuffle(ys)
    assert ks_statistic(xs) == ks_statistic(ys)


def test_rows_agree_with_scalar(rng):
    u = rng.random((50, 37))
    rows = ks_statistic_rows(u)
    assert rows.tolist() == [ks_statistic(r) for r in u]


class TestThreshold:
    def test_table_shape(self):
        table = threshold_table()
        assert len(table) == 130
        assert {a for a, _ in table} == set(ALPHAS)
        assert {m for _, m in table} == set(MS)

    def test_published_values(self):
        assert threshold(0.5, 1, "tabulated") == 0.75
        assert threshold(0.01, 1000, "tabulated") == 0.051292419434
        assert threshold(0.1, 100, "tabulated") == 0.120666503906

    def test_approximate(self):
        approx = threshold(0.01, 1000, "approximate")
        assert approx == pytest.approx(math.sqrt(-0.5 * math.log(0.005) / 1000), rel=1e-15)
        assert approx == pytest.approx(0.05147, abs=5e-6)
        assert abs(approx - 0.051292419434) / 0.051292419434 < 0.005

    def test_alias(self):
        assert threshold(0.01, 7, "approx") == threshold(0.01, 7, "approximate")

    def test_not_tabulated(self):
        with pytest.raises(NotTabulatedError):
            threshold(0.01, 7, "tabulated")
        with pytest.raises(NotTabulatedError):
            threshold(0.02, 100, "tabulated")

    def test_auto(self):
        assert resolve_threshold(0.01, 100, "auto") == (0.160797119141, "tabulated")
        theta, src = resolve_threshold(0.01, 7, "auto")
        assert src == "approximate" and theta == threshold(0.01, 7, "approximate")

    @pytest.mark.parametrize("alpha,m", [(0.0, 10), (1.0, 10), (0.1, 0), (0.1, 2.5)])
    def test_bad_parameters(self, alpha, m):
        with pytest.raises(InvalidParameterError):
            threshold(alpha, m)

    def test_bad_source(self):
        with pytest.raises(InvalidParameterError):
            threshold(0.1, 10, "exact")

    @pytest.mark.parametrize("source", ["tabulated", "approximate"])
    def test_monotone(self, source):
        th = np.array([[threshold(a, m, source) for m in MS] for a in ALPHAS])
        assert np.all(np.diff(th, axis=1) <= 0)  # non-increasing in m
        assert np.all(np.diff(th, axis=0) <= 0)  # non-increasing in alpha


class TestBatchTest:
    def test_even_ranks_negative(self, rng):
        model = build_calibration(rng.beta(5, 1, 10_000))
        m = 100
        ranks = np.arange(m) * 100 + 49  # breakpoint k = 100j + 50 maps to (j + 0.5) / m
        out = batch_test(model, model.breakpoints[ranks], TestConfig(0.01, m))
        assert out.statistic == pytest.approx(1 / (2 * m), abs=1e-12)
        assert not out.positive
        assert out.source == "tabulated" and out.threshold == 0.160797119141

    def test_extreme_batch_positive(self, rng):
        model = build_calibration(0.5 + 0.01 * rng.standard_normal(1000))
        out = batch_test(model, [0.999] * 50, TestConfig(0.01, 50))
        assert out.statistic > 0.99 and out.positive

    def test_size_mismatch(self):
        model = build_calibration([0.1, 0.2, 0.3])
        with pytest.raises(InvalidParameterError):
            batch_test(model, [0.1, 0.2], TestConfig(0.01, 3))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=5, max_size=5), st.sampled_from(ALPHAS),
           st.sampled_from(["tabulated", "approximate", "auto"]))
    def test_decision_boundary(self, xs, alpha, source):
        model = build_calibration([0.1, 0.3, 0.5, 0.7, 0.9])
        out = batch_test(model, xs, TestConfig(alpha, 5, source))
        assert out.positive == (out.statistic > out.threshold)

    def test_monotone_transform_invariance_at_breakpoints(self, rng):
        cal = rng.beta(2, 5, 500)
        model = build_calibration(cal)
        batch = model.breakpoints[rng.integers(0, 500, 40)]
        f = np.sqrt  # strictly increasing on [0, 1]
        model_t = build_calibration(f(model.breakpoints))
        cfg = TestConfig(0.05, 40)
        assert batch_test(model, batch, cfg).statistic == pytest.approx(
            batch_test(model_t, f(batch), cfg).statistic, abs=1e-12)

    @pytest.mark.slow
    @pytest.mark.parametrize("a,b", [(5, 1), (2, 2), (1, 1)])
    def test_distribution_free_fpr(self, a, b):
        rng = np.random.default_rng([a, b])
        model = build_calibration(rng.beta(a, b, 50_000))
        R, m, alpha = 10_000, 100, 0.01
        stats = ks_statistic_rows(model.uniformize(rng.beta(a, b, (R, m))))
        rate = np.mean(stats > threshold(alpha, m))
        assert abs(rate - alpha) <= 3 * math.sqrt(alpha * (1 - alpha) / R)
