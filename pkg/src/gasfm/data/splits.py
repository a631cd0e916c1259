"""Chronological per-customer splits, sliding windows and normalization.

A window is identified by its forecast origin ``t``: history covers days
``[t - n, t)`` and the target covers ``[t, t + horizon)``.  A window belongs
to a region when its whole target lies inside that region; its history may
reach back into earlier regions but never before day 0.  Windows whose
target straddles a region boundary belong to no region.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import CustomerSeries, DataError, NormalizationStats, SplitSpec

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class Region:
    start: int
    stop: int

    def __len__(self) -> int:
        return max(0, self.stop - self.start)


@dataclass(frozen=True)
class Splits:
    length: int
    train: Region
    val: Region
    test: Region
    history_len: int
    horizon: int

    def origins(self, region: Region) -> np.ndarray:
        lo = max(region.start, self.history_len)
        hi = region.stop - self.horizon  # inclusive
        if hi < lo:
            return np.empty(0, dtype=np.int64)
        return np.arange(lo, hi + 1, dtype=np.int64)

    def train_origins(self):
        return self.origins(self.train)

    def val_origins(self):
        return self.origins(self.val)

    def test_origins(self):
        return self.origins(self.test)


def region_bounds(length: int, spec: SplitSpec) -> tuple[Region, Region, Region]:
    test_start = max(0, length - spec.test_span_days)
    a, b = spec.train_val_ratio
    train_stop = (test_start * a) // (a + b)
    return Region(0, train_stop), Region(train_stop, test_start), Region(test_start, length)


def make_splits(series_or_length, spec: SplitSpec) -> Splits:
    """Split a series of length T into train/val/test regions.

    Raises DataError when T < test_span + history + horizon; such customers
    are excluded from evaluation by the callers.
    """
    T = series_or_length if isinstance(series_or_length, (int, np.integer)) else len(series_or_length)
    minimum = spec.test_span_days + spec.history_len + spec.horizon
    if T < minimum:
        raise DataError(f"series of length {T} shorter than the minimum {minimum} for a test window")
    train, val, test = region_bounds(int(T), spec)
    return Splits(int(T), train, val, test, spec.history_len, spec.horizon)


def train_region_values(series: CustomerSeries, spec: SplitSpec) -> np.ndarray:
    train, _, _ = region_bounds(len(series), spec)
    v = series.values[train.start : train.stop]
    m = series.observed_mask[train.start : train.stop]
    return v[m]


def fit_normalization(series: CustomerSeries, spec: SplitSpec, floor: float = STD_FLOOR) -> NormalizationStats:
    vals = train_region_values(series, spec)
    if vals.size == 0:
        raise DataError(f"{series.customer_id}: no observed values in the training region")
    return NormalizationStats(series.customer_id, float(vals.mean()), max(float(vals.std()), floor))


def normalize_dataset(series, spec: SplitSpec, floor: float = STD_FLOOR):
    """Standardize each customer with statistics of its own training region."""
    out, stats = [], {}
    for s in series:
        st = fit_normalization(s, spec, floor)
        stats[s.customer_id] = st
        out.append(s.replace(values=st.normalize(s.values)))
    return out, stats


def window_counts(length: int, spec: SplitSpec) -> tuple[int, int, int]:
    sp = make_splits(length, spec)
    return len(sp.train_origins()), len(sp.val_origins()), len(sp.test_origins())
