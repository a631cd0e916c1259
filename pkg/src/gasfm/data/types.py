from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

UNKNOWN = "UNKNOWN"


class DataError(ValueError):
    """Raised when input data violates a pipeline contract."""


@dataclass(frozen=True)
class RawMeterReading:
    customer_id: str
    meter_id: str
    date: dt.date
    volume: float


@dataclass
class CustomerSeries:
    """One customer's consolidated daily series.

    ``values`` holds NaN wherever ``observed_mask`` is False.
    """

    customer_id: str
    start_date: dt.date
    values: np.ndarray
    observed_mask: np.ndarray
    industry_l1: str = UNKNOWN
    industry_l2: str = UNKNOWN
    province: str = UNKNOWN
    city: str = UNKNOWN

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.observed_mask = np.asarray(self.observed_mask, dtype=bool)
        if self.values.ndim != 1 or self.values.shape != self.observed_mask.shape:
            raise DataError(
                f"{self.customer_id}: values and observed_mask must be 1-D of equal length "
                f"(got {self.values.shape} vs {self.observed_mask.shape})"
            )

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self) - 1)

    def replace(self, **changes) -> "CustomerSeries":
        kw = dict(
            customer_id=self.customer_id,
            start_date=self.start_date,
            values=self.values,
            observed_mask=self.observed_mask,
            industry_l1=self.industry_l1,
            industry_l2=self.industry_l2,
            province=self.province,
            city=self.city,
        )
        kw.update(changes)
        return CustomerSeries(**kw)

    def equals(self, other: "CustomerSeries") -> bool:
        return (
            self.customer_id == other.customer_id
            and self.start_date == other.start_date
            and self.industry_l1 == other.industry_l1
            and self.industry_l2 == other.industry_l2
            and self.province == other.province
            and self.city == other.city
            and np.array_equal(self.observed_mask, other.observed_mask)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


@dataclass(frozen=True)
class NormalizationStats:
    customer_id: str
    mean: float
    std: float

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def denormalize(self, z):
        return np.asarray(z, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class SplitSpec:
    test_span_days: int = 183
    train_val_ratio: tuple[int, int] = (7, 1)
    history_len: int = 96
    horizon: int = 30

    def __post_init__(self):
        if self.test_span_days < 1 or self.history_len < 1 or self.horizon < 1:
            raise ValueError("test_span_days, history_len and horizon must be positive")
        a, b = self.train_val_ratio
        if a < 1 or b < 0:
            raise ValueError(f"invalid train_val_ratio {self.train_val_ratio}")


@dataclass
class DatasetManifest:
    customer_count: int
    total_time_points: int
    industry_counts: dict[str, int] = field(default_factory=dict)
    weighted_adf: float | None = None
    length_min: int = 0
    length_max: int = 0
    length_mean: float = 0.0

    @classmethod
    def from_series(cls, series: list[CustomerSeries], weighted_adf: float | None = None):
        counts: dict[str, int] = {}
        for s in series:
            counts[s.industry_l1] = counts.get(s.industry_l1, 0) + 1
        lengths = [len(s) for s in series]
        return cls(
            customer_count=len(series),
            total_time_points=int(sum(lengths)),
            industry_counts=dict(sorted(counts.items())),
            weighted_adf=weighted_adf,
            length_min=min(lengths, default=0),
            length_max=max(lengths, default=0),
            length_mean=float(np.mean(lengths)) if lengths else 0.0,
        )

    def to_dict(self) -> dict:
        return {
            "customer_count": self.customer_count,
            "total_time_points": self.total_time_points,
            "industry_counts": self.industry_counts,
            "weighted_adf": self.weighted_adf,
            "length_min": self.length_min,
            "length_max": self.length_max,
            "length_mean": self.length_mean,
        }
