import datetime as dt
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_series
from gasfm.config import SyntheticConfig
from gasfm.data import (
    UNKNOWN,
    DataError,
    RawMeterReading,
    SplitSpec,
    consolidate_readings,
    filter_short_series,
    generate_synthetic_dataset,
    impute,
    make_splits,
    normalize_dataset,
    read_dataset,
    read_metadata,
    read_readings,
    write_dataset,
    zscore_screen,
)
from gasfm.data.ingest import write_metadata, write_readings
from gasfm.data.screening import ImputationError, screen_dataset
from gasfm.data.splits import STD_FLOOR, fit_normalization, region_bounds, window_counts

D0 = dt.date(2021, 3, 1)


def day(i):
    return D0 + dt.timedelta(days=i)


# -- consolidation -------------------------------------------------------


def test_two_meters_same_day_are_summed():
    out = consolidate_readings([RawMeterReading("A", "m1", D0, 3.0), RawMeterReading("A", "m2", D0, 4.0)])
    assert len(out) == 1 and out[0].values.tolist() == [7.0]


def test_consecutive_days_single_meter():
    out = consolidate_readings([RawMeterReading("A", "m", day(i), float(i)) for i in range(3)])
    assert out[0].values.tolist() == [0.0, 1.0, 2.0]
    assert out[0].observed_mask.all()


def test_gap_day_is_unobserved():
    out = consolidate_readings([RawMeterReading("A", "m", day(0), 1.0), RawMeterReading("A", "m", day(2), 2.0)])
    assert out[0].observed_mask.tolist() == [True, False, True]
    assert len(out[0]) == 3


def test_negative_volume_rejected_with_diagnostic():
    diag = []
    out = consolidate_readings([RawMeterReading("A", "m", D0, -1.0), RawMeterReading("A", "m", day(1), 2.0)], diagnostics=diag)
    assert len(diag) == 1 and "volume=-1.0" in diag[0]
    assert out[0].start_date == day(1)


def test_empty_input():
    assert consolidate_readings([]) == []


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from(["m1", "m2"]), st.integers(0, 9), st.floats(0, 1e6)), min_size=1, max_size=40), st.randoms())
def test_consolidation_is_order_independent(rows, rnd):
    readings = [RawMeterReading(c, m, day(d), v) for c, m, d, v in rows]
    shuffled = readings[:]
    rnd.shuffle(shuffled)
    a, b = consolidate_readings(readings), consolidate_readings(shuffled)
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x.equals(y)


def test_reading_and_metadata_files_round_trip(tmp_path):
    readings = [RawMeterReading("A", "m1", day(0), 1.5), RawMeterReading("B", "m9", day(3), 0.1)]
    for name in ("r.csv", "r.jsonl"):
        write_readings(tmp_path / name, readings)
        assert read_readings(tmp_path / name) == readings
    s = make_series([1.0, 2.0], cid="A", industry="glass")
    write_metadata(tmp_path / "meta.csv", [s])
    meta = read_metadata(tmp_path / "meta.csv")
    assert meta["A"]["industry_l1"] == "glass"
    merged = consolidate_readings(readings, meta)
    assert merged[0].industry_l1 == "glass" and merged[1].industry_l1 == UNKNOWN


def test_dataset_round_trip_is_exact(tmp_path):
    series, _ = generate_synthetic_dataset(SyntheticConfig(n_customers=5), 11)
    write_dataset(tmp_path / "d.jsonl", series)
    back = read_dataset(tmp_path / "d.jsonl")
    assert all(a.equals(b) for a, b in zip(series, back))


# -- filtering and screening -----------------------------------------------


def test_short_series_boundary():
    s299, s300 = make_series(np.ones(299)), make_series(np.ones(300))
    assert filter_short_series([s299, s300]) == [s300]
    assert filter_short_series([]) == []
    with pytest.raises(ValueError):
        filter_short_series([s300], 0)


def test_zscore_value():
    # mean 0 and population std 2 over the observed points
    s = make_series([10.0, -2.0, -2.0, -2.0, -2.0, -2.0])
    res = zscore_screen(s)
    mu, sd = np.mean(s.values), np.std(s.values)
    assert res.z[0] == pytest.approx((10 - mu) / sd)
    s2 = make_series([2.0, -2.0])
    assert zscore_screen(s2).z.tolist() == [1.0, -1.0]


def test_constant_series_kept_with_zero_z():
    res = zscore_screen(make_series(np.full(50, 3.0)))
    assert res.keep and np.all(res.z == 0)


def test_non_finite_series_rejected():
    s = make_series([1.0, np.inf, 2.0], mask=[True, True, True])
    with pytest.raises(DataError):
        zscore_screen(s)


@given(st.integers(2, 60), st.floats(1.0, 20.0))
@settings(max_examples=50, deadline=None)
def test_share_of_large_z_obeys_chebyshev(n, k):
    # population z-scores satisfy mean(z**2) == 1, so at most 1/k**2 exceed k
    rng = np.random.default_rng(n)
    x = rng.standard_cauchy(n)
    res = zscore_screen(make_series(x))
    if np.std(x) > 0:
        assert np.mean(np.abs(res.z) > k) <= 1 / k**2 + 1e-12


def test_spiked_series_dropped_and_clean_series_kept():
    rng = np.random.default_rng(0)
    base = 100 + rng.normal(0, 5, 1000)
    spiked = base.copy()
    spiked[rng.choice(1000, 12, replace=False)] = 100 * 150  # 1.2% spikes, each |Z| > 9
    res = zscore_screen(make_series(spiked))
    assert res.outlier_fraction == pytest.approx(0.012)
    assert not res.keep
    assert zscore_screen(make_series(base)).keep


def test_screening_is_idempotent():
    series, _ = generate_synthetic_dataset(SyntheticConfig(n_customers=40, malfunction_fraction=0.2), 5)
    once = screen_dataset(filter_short_series(series))
    twice = screen_dataset(filter_short_series(once))
    assert [s.customer_id for s in once] == [s.customer_id for s in twice]
    assert len(once) < len(series)


# -- imputation ----------------------------------------------------------


def test_linear_midpoint():
    out = impute(make_series([1.0, np.nan, 3.0]))
    assert out.values.tolist() == [1.0, 2.0, 3.0] and out.observed_mask.all()


def test_fully_observed_unchanged():
    s = make_series([1.0, 5.0])
    assert impute(s) is s


def test_leading_gap_uses_nearest_observed():
    assert impute(make_series([np.nan, 2.0, 4.0])).values.tolist() == [2.0, 2.0, 4.0]


def test_all_missing_raises():
    with pytest.raises(DataError):
        impute(make_series([np.nan, np.nan]))


def test_failing_adapter_is_named():
    class Broken:
        name = "saits-adapter"

        def __call__(self, values, mask):
            raise RuntimeError("boom")

    with pytest.raises(ImputationError, match="saits-adapter"):
        impute(make_series([1.0, np.nan, 2.0]), Broken())


@given(st.lists(st.one_of(st.none(), st.floats(-1e6, 1e6)), min_size=2, max_size=60))
@settings(max_examples=60, deadline=None)
def test_observed_values_survive_imputation_bit_exact(raw):
    vals = np.array([np.nan if v is None else v for v in raw])
    if np.isnan(vals).all():
        return
    s = make_series(vals)
    out = impute(s)
    assert np.array_equal(out.values[s.observed_mask], s.values[s.observed_mask])
    assert np.all(np.isfinite(out.values))


# -- splits and normalization ----------------------------------------------


def test_split_regions_for_length_1000():
    sp = make_splits(1000, SplitSpec(horizon=30))
    assert (sp.train.start, sp.train.stop) == (0, 714)
    assert (sp.val.start, sp.val.stop) == (714, 817)
    assert (sp.test.start, sp.test.stop) == (817, 1000)
    assert 714 == math.floor((1000 - 183) * 7 / 8)


def test_minimum_length_boundary():
    spec = SplitSpec(horizon=30)
    T = 183 + 96 + 30
    sp = make_splits(T, spec)
    # every stride-1 origin whose target stays inside the final 183 days
    assert len(sp.test_origins()) == 183 - 30 + 1
    assert sp.test_origins()[0] - 96 >= 0
    with pytest.raises(DataError):
        make_splits(T - 1, spec)


@given(st.integers(14, 50), st.integers(1, 4), st.integers(1, 3))
@settings(max_examples=150, deadline=None)
def test_window_counts_match_enumeration(T, n, h):
    spec = SplitSpec(test_span_days=8, train_val_ratio=(7, 1), history_len=n, horizon=h)
    if T < 8 + n + h:
        return
    train, val, test = region_bounds(T, spec)
    expected = tuple(len(oracles.all_windows(T, n, h, (r.start, r.stop))) for r in (train, val, test))
    assert window_counts(T, spec) == expected


@given(st.integers(300, 2400), st.sampled_from([7, 15, 30, 60, 90, 120, 150, 180]))
@settings(max_examples=80, deadline=None)
def test_training_targets_precede_validation(T, h):
    spec = SplitSpec(horizon=h)
    if T < 183 + 96 + h:
        return
    sp = make_splits(T, spec)
    for t in sp.train_origins():
        assert t + h <= sp.val.start
    for t in sp.val_origins():
        assert t >= sp.val.start and t + h <= sp.test.start


def test_normalization_example_and_round_trip():
    spec = SplitSpec(test_span_days=2, train_val_ratio=(1, 0), history_len=1, horizon=1)
    s = make_series([3.0, 7.0, 3.0, 7.0, 9.0, 1.0])  # train = first 4 days: mean 5, std 2
    out, stats = normalize_dataset([s], spec)
    st_ = stats["C1"]
    assert (st_.mean, st_.std) == (5.0, 2.0)
    assert out[0].values[4] == 2.0
    assert np.allclose(st_.denormalize(st_.normalize(s.values)), s.values, rtol=1e-9, atol=0)


def test_constant_training_region_floors_std():
    spec = SplitSpec(test_span_days=2, train_val_ratio=(1, 0), history_len=1, horizon=1)
    s = make_series([4.0, 4.0, 4.0, 4.0, 5.0, 6.0])
    st_ = fit_normalization(s, spec)
    assert st_.std == STD_FLOOR
    assert np.all(st_.normalize(s.values[:4]) == 0)


@given(st.floats(-1e6, 1e6), st.floats(1e-6, 1e6), st.lists(st.floats(-1e9, 1e9), min_size=1, max_size=20))
def test_normalize_round_trip_property(mean, std, xs):
    from gasfm.data import NormalizationStats

    stats = NormalizationStats("c", mean, std)
    x = np.array(xs)
    back = stats.denormalize(stats.normalize(x))
    assert np.all(np.abs(back - x) <= 1e-9 * np.maximum(np.abs(x), abs(mean) + std))


# -- synthetic generator ---------------------------------------------------


def test_synthetic_is_deterministic_and_counts():
    cfg = SyntheticConfig(n_customers=100)
    a, man = generate_synthetic_dataset(cfg, 7)
    b, _ = generate_synthetic_dataset(cfg, 7)
    assert man.customer_count == 100
    assert man.total_time_points == sum(len(s) for s in a)
    assert all(x.equals(y) for x, y in zip(a, b))
    assert all(300 <= len(s) <= 2355 for s in a)


def test_catering_more_variable_than_processing():
    def mean_cv(archetype):
        cfg = SyntheticConfig(n_customers=50, archetypes=[archetype, "glass"], archetype_weights=[1.0, 0.0], malfunction_fraction=0.0)
        series, _ = generate_synthetic_dataset(cfg, 21)
        cvs = []
        for s in series:
            v = s.values[s.observed_mask]
            cvs.append(v.std() / v.mean())
        return float(np.mean(cvs))

    assert mean_cv("catering") > mean_cv("processing")


def test_synthetic_rejects_single_archetype():
    with pytest.raises(ValueError):
        SyntheticConfig(archetypes=["glass"])
