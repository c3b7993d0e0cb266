import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksconf import (InvalidParameterError, ScoreSample, build_calibration, filter_suspicious,
                    lowest_confidence_baseline)
from ksconf.filtering import bin_uniformized, select_indices
from ksconf.harness import BetaSource, calibrate, evaluate_filtering

# breakpoints k/1001 so that confidence k/1001 uniformizes to exactly k/1000
GRID_MODEL = build_calibration(np.arange(1, 1001) / 1001)


def on_grid(ks):
    return [ScoreSample(f"s{i:03d}", k / 1001) for i, k in enumerate(ks)]


def test_bin_count_for_m100_w10():
    u = np.linspace(0.005, 0.995, 100)
    _, _, _, total = select_indices(u, 10, np.random.default_rng(0))
    assert total == 10


def test_constructed_peak():
    ks = list(range(1, 81, 2))                          # 40 values in [0, 0.1)
    for b in range(1, 10):                              # 60 spread over bins 1..9
        ks += list(range(b * 100 + 5, b * 100 + 95, 14))[: 7 if b <= 6 else 6]
    assert len(ks) == 100
    batch = on_grid(ks)
    res = filter_suspicious(GRID_MODEL, batch, 10, seed=3)
    assert res.bin_index == 0 and res.bin_count == 40 and res.bin_total == 10
    assert res.estimated_enrichment == 4.0
    assert len(res.selected_ids) == 10
    peak_ids = {s.id for s in batch[:40]}
    assert set(res.selected_ids) <= peak_ids


def test_shortfall_filled_from_next_bins():
    # m=5, w=4: two bins; the fuller one holds only 3
    u = np.array([0.1, 0.2, 0.3, 0.7, 0.9])
    idx, b, count, total = select_indices(u, 4, np.random.default_rng(0))
    assert (b, count, total) == (0, 3, 2)
    assert len(idx) == 4 and set(idx[:3]) == {0, 1, 2}


def test_tie_lowest_bin_wins():
    u = np.array([0.1, 0.2, 0.7, 0.8])
    _, b, count, _ = select_indices(u, 2, np.random.default_rng(0))
    assert (b, count) == (0, 2)


def test_one_goes_to_last_bin():
    assert bin_uniformized(np.array([1.0, 0.0, 0.5]), 4).tolist() == [3, 0, 2]


def test_deterministic():
    batch = on_grid(np.random.default_rng(1).integers(1, 1001, 200))
    assert filter_suspicious(GRID_MODEL, batch, 7, seed=5) == filter_suspicious(GRID_MODEL, batch, 7, seed=5)


@pytest.mark.parametrize("w", [0, 6])
def test_bad_w(w):
    with pytest.raises(InvalidParameterError):
        filter_suspicious(GRID_MODEL, on_grid([1, 2, 3, 4, 5]), w)
    with pytest.raises(InvalidParameterError):
        lowest_confidence_baseline(on_grid([1, 2, 3, 4, 5]), w)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(1, 1000), min_size=1, max_size=120), st.data())
def test_subset_property(ks, data):
    w = data.draw(st.integers(1, len(ks)))
    batch = on_grid(ks)
    res = filter_suspicious(GRID_MODEL, batch, w, seed=data.draw(st.integers(0, 100)))
    assert len(res.selected_ids) == w
    assert len(set(res.selected_ids)) == w
    assert set(res.selected_ids) <= {s.id for s in batch}
    assert res.estimated_enrichment == res.bin_count / (len(ks) / res.bin_total)


def test_lowest_confidence():
    batch = [ScoreSample("a", 0.9), ScoreSample("b", 0.1), ScoreSample("c", 0.5), ScoreSample("d", 0.3)]
    assert lowest_confidence_baseline(batch, 2) == ["b", "d"]
    assert sorted(lowest_confidence_baseline(batch, 4)) == ["a", "b", "c", "d"]


def test_lowest_confidence_ties_by_id():
    batch = [ScoreSample("z", 0.2), ScoreSample("y", 0.2), ScoreSample("x", 0.5)]
    assert lowest_confidence_baseline(batch, 1) == ["y"]


@pytest.mark.slow
def test_no_signal_means_random_selection():
    # alternative component identical to the reference: nothing to enrich
    cal = calibrate(BetaSource(5, 1), 20_000, seed=0)
    rep = evaluate_filtering(cal, BetaSource(5, 1), [0.3], 200, 10, trials=2000, seed=1,
                             positive_only=False)
    for method in ("ksconf-filter", "random"):
        row = rep.rate(method, 0.01, 200, 0.3)
        assert abs(row.rate - 0.3) <= 3 * row.stderr


@pytest.mark.slow
def test_lowest_confidence_fails_for_confident_alternative():
    cal = calibrate(BetaSource(5, 1), 20_000, seed=0)
    rep = evaluate_filtering(cal, BetaSource(30, 1), [0.3], 1000, 10, trials=300, seed=2)
    low = rep.rate("lowest-confidence", 0.01, 1000, 0.3)
    ks = rep.rate("ksconf-filter", 0.01, 1000, 0.3)
    assert low.rate + 2 * low.stderr < 0.3 < ks.rate - 2 * ks.stderr
