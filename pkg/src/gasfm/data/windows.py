"""Normalized customers with their regions, and window sampling helpers."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .splits import Region, fit_normalization, region_bounds
from .types import CustomerSeries, DataError, NormalizationStats, SplitSpec

logger = logging.getLogger(__name__)


@dataclass
class PreparedCustomer:
    series: CustomerSeries  # raw-scale, fully observed
    z: np.ndarray  # normalized values
    stats: NormalizationStats
    train: Region
    val: Region
    test: Region

    @property
    def customer_id(self) -> str:
        return self.series.customer_id

    @property
    def industry(self) -> str:
        return self.series.industry_l1

    def origins(self, region: Region, history_len: int, horizon: int, stride: int = 1) -> np.ndarray:
        lo = max(region.start, history_len)
        hi = region.stop - horizon
        if hi < lo:
            return np.empty(0, dtype=np.int64)
        return np.arange(lo, hi + 1, stride, dtype=np.int64)


def prepare_customers(series, spec: SplitSpec) -> list[PreparedCustomer]:
    out = []
    for s in series:
        if not s.observed_mask.all():
            raise DataError(f"{s.customer_id}: series must be imputed before windowing")
        train, val, test = region_bounds(len(s), spec)
        if len(train) == 0:
            logger.warning("%s: empty training region, skipped", s.customer_id)
            continue
        st = fit_normalization(s, spec)
        out.append(PreparedCustomer(s, st.normalize(s.values), st, train, val, test))
    return out


def overlap_offset(n: int, overlap_ratio: float) -> int:
    return int(math.floor(n * (1.0 - overlap_ratio) + 0.5))


def overlap_sample(values, n: int, overlap_ratio: float, rng: np.random.Generator, region: Region | None = None):
    """Draw two length-n windows, the second starting ``offset`` days after the first.

    Returns ``(window_a, window_b, start)`` or None when the region is too short.
    """
    values = np.asarray(values)
    region = region or Region(0, len(values))
    offset = overlap_offset(n, overlap_ratio)
    last_start = region.stop - (n + offset)
    if last_start < region.start:
        return None
    start = int(rng.integers(region.start, last_start + 1))
    return values[start : start + n], values[start + offset : start + offset + n], start


class WindowIndex:
    """Flat (customer, origin) index over one region of many customers."""

    def __init__(self, customers, region_name: str, history_len: int, horizon: int, stride: int = 1):
        cust, orig = [], []
        for ci, c in enumerate(customers):
            o = c.origins(getattr(c, region_name), history_len, horizon, stride)
            cust.append(np.full(o.shape, ci, dtype=np.int64))
            orig.append(o)
        self.customers = customers
        self.history_len, self.horizon = history_len, horizon
        self.cust = np.concatenate(cust) if cust else np.empty(0, dtype=np.int64)
        self.origin = np.concatenate(orig) if orig else np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.cust.shape[0])

    def subset(self, idx) -> "WindowIndex":
        other = object.__new__(WindowIndex)
        other.customers, other.history_len, other.horizon = self.customers, self.history_len, self.horizon
        other.cust, other.origin = self.cust[idx], self.origin[idx]
        return other

    def arrays(self, idx=None):
        """(history, target) arrays of shape (k, n) and (k, horizon), normalized scale."""
        idx = np.arange(len(self)) if idx is None else np.asarray(idx)
        n, h = self.history_len, self.horizon
        x = np.empty((len(idx), n))
        y = np.empty((len(idx), h))
        for r, k in enumerate(idx):
            z = self.customers[self.cust[k]].z
            t = self.origin[k]
            x[r] = z[t - n : t]
            y[r] = z[t : t + h]
        return x, y
