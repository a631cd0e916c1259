"""Augmented Dickey-Fuller statistic and its length-weighted dataset average."""
from __future__ import annotations

import logging
import math

import numpy as np

logger = logging.getLogger(__name__)


def schwert_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_statistic(x, maxlag: int | None = None) -> float:
    """t-statistic of gamma in  dy_t = c + gamma*y_{t-1} + sum_i d_i*dy_{t-i} + e_t.

    The lag order is fixed (no information-criterion search); by default the
    Schwert rule floor(12*(T/100)^0.25).  Raises ValueError when the series is
    too short for the regression.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("adf_statistic needs a finite 1-D series")
    T = x.shape[0]
    p = schwert_lag(T) if maxlag is None else int(maxlag)
    dx = np.diff(x)
    nobs = dx.shape[0] - p
    ncols = p + 2
    if nobs <= ncols:
        raise ValueError(f"series of length {T} too short for ADF with {p} lags")

    X = np.empty((nobs, ncols))
    X[:, 0] = x[p : p + nobs]  # y_{t-1}
    for i in range(1, p + 1):
        X[:, i] = dx[p - i : p - i + nobs]
    X[:, -1] = 1.0
    y = dx[p:]

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    sigma2 = resid @ resid / (nobs - ncols)
    xtx_inv = np.linalg.pinv(X.T @ X)
    se = math.sqrt(sigma2 * xtx_inv[0, 0])
    if se == 0.0:
        raise ValueError("degenerate ADF regression (zero standard error)")
    return float(beta[0] / se)


def weighted_adf(dataset) -> float:
    """Length-weighted mean ADF statistic; series too short are skipped with a warning."""
    num = 0.0
    den = 0
    for s in dataset:
        values = s.values if hasattr(s, "values") else np.asarray(s)
        name = getattr(s, "customer_id", "<series>")
        try:
            stat = adf_statistic(values)
        except ValueError as exc:
            logger.warning("weighted_adf: skipping %s: %s", name, exc)
            continue
        num += len(values) * stat
        den += len(values)
    if den == 0:
        return float("nan")
    return num / den
