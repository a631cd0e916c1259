from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .types import CustomerSeries, DataError

logger = logging.getLogger(__name__)

DEFAULT_MIN_LEN = 300
DEFAULT_Z_THRESHOLD = 8.0
DEFAULT_MAX_FRACTION = 0.01


class ImputationError(RuntimeError):
    pass


def filter_short_series(series, min_len: int = DEFAULT_MIN_LEN):
    if min_len < 1:
        raise ValueError(f"min_len must be >= 1, got {min_len}")
    return [s for s in series if len(s) >= min_len]


@dataclass
class ScreenResult:
    keep: bool
    z: np.ndarray  # NaN at unobserved positions
    outlier_fraction: float


def zscore_screen(
    series: CustomerSeries,
    z_threshold: float = DEFAULT_Z_THRESHOLD,
    max_fraction: float = DEFAULT_MAX_FRACTION,
) -> ScreenResult:
    """Flag a series whose share of |Z| > z_threshold exceeds max_fraction.

    Z uses the mean and population std of the observed points.  A series with
    zero spread is kept and gets Z = 0 everywhere.  Individual outliers are
    never modified here.
    """
    if len(series) < 2:
        raise DataError(f"{series.customer_id}: need at least 2 points for Z-scores")
    obs = series.values[series.observed_mask]
    if not np.all(np.isfinite(obs)):
        raise DataError(f"{series.customer_id}: non-finite observed values")
    z = np.full(len(series), np.nan)
    if obs.size == 0:
        return ScreenResult(True, z, 0.0)
    sigma = obs.std()
    if sigma == 0.0:
        z[series.observed_mask] = 0.0
        return ScreenResult(True, z, 0.0)
    zo = (obs - obs.mean()) / sigma
    z[series.observed_mask] = zo
    frac = float(np.count_nonzero(np.abs(zo) > z_threshold)) / obs.size
    return ScreenResult(frac <= max_fraction, z, frac)


def screen_dataset(series, z_threshold=DEFAULT_Z_THRESHOLD, max_fraction=DEFAULT_MAX_FRACTION, diagnostics=None):
    kept = []
    for s in series:
        res = zscore_screen(s, z_threshold, max_fraction)
        if res.keep:
            kept.append(s)
        else:
            msg = f"{s.customer_id}: dropped by Z screen ({res.outlier_fraction:.4f} of points beyond |Z|>{z_threshold})"
            logger.info(msg)
            if diagnostics is not None:
                diagnostics.append(msg)
    return kept


class Imputer(Protocol):
    """Imputation adapter: fills NaNs given the observed mask.

    Implementations (e.g. a wrapper around an external SAITS model) return an
    array of the same length; only unobserved positions are taken from it.
    """

    name: str

    def __call__(self, values: np.ndarray, observed_mask: np.ndarray) -> np.ndarray: ...


class LinearInterpolationImputer:
    """Linear interpolation inside gaps, nearest observed value beyond the ends."""

    name = "linear"

    def __call__(self, values, observed_mask):
        idx = np.arange(values.shape[0])
        obs = np.flatnonzero(observed_mask)
        # np.interp clamps to the end values outside [obs[0], obs[-1]]
        return np.interp(idx, obs, values[obs])


def impute(series: CustomerSeries, strategy: Imputer | None = None) -> CustomerSeries:
    strategy = strategy or LinearInterpolationImputer()
    name = getattr(strategy, "name", type(strategy).__name__)
    mask = series.observed_mask
    if not mask.any():
        raise DataError(f"{series.customer_id}: cannot impute an all-missing series")
    if mask.all():
        return series
    try:
        filled = np.asarray(strategy(series.values.copy(), mask.copy()), dtype=np.float64)
    except Exception as exc:
        raise ImputationError(f"imputer {name!r} failed on {series.customer_id}: {exc}") from exc
    if filled.shape != series.values.shape or not np.all(np.isfinite(filled[~mask])):
        raise ImputationError(f"imputer {name!r} returned an invalid fill for {series.customer_id}")
    out = np.where(mask, series.values, filled)
    return series.replace(values=out, observed_mask=np.ones_like(mask))
