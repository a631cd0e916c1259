from __future__ import annotations

import logging
import math

import numpy as np

from ..data.splits import make_splits
from ..data.types import DataError, SplitSpec
from ..data.windows import PreparedCustomer
from ..finetune.core import batched_forecast
from . import metrics
from .report import MetricReport

logger = logging.getLogger(__name__)


def naive_forecaster(x: np.ndarray, horizon: int) -> np.ndarray:
    """Last observed value carried forward."""
    return np.repeat(x[:, -1:], horizon, axis=1)


def _forecast_fn(model, batch_size):
    if isinstance(model, str):
        if model != "naive":
            raise ValueError(f"unknown baseline {model!r}")
        return naive_forecaster
    if callable(model) and not hasattr(model, "forecast"):
        return model
    return lambda x, h: batched_forecast(model, x, h, batch_size)


def customer_test_windows(c: PreparedCustomer, spec: SplitSpec, horizon: int, stride: int = 1):
    """(origins, x, y) on the normalized scale, or None when the customer has no valid test window."""
    n = spec.history_len
    try:
        make_splits(len(c.z), _with_horizon(spec, horizon))
    except DataError:
        return None
    origins = c.origins(c.test, n, horizon, stride)
    if origins.size == 0:
        return None
    x = np.stack([c.z[t - n : t] for t in origins])
    y = np.stack([c.z[t : t + horizon] for t in origins])
    return origins, x, y


def _with_horizon(spec: SplitSpec, horizon: int) -> SplitSpec:
    return SplitSpec(spec.test_span_days, spec.train_val_ratio, spec.history_len, horizon)


def evaluate_model(
    model,
    customers: list[PreparedCustomer],
    horizons,
    spec: SplitSpec,
    stride: int = 1,
    batch_size: int = 1024,
    mase_denominator: str = "target",
    label: str = "model",
) -> MetricReport:
    """Score ``model`` on every customer's test windows for each horizon.

    ``model`` is a GasFM with heads for all horizons, the string ``"naive"``,
    or a callable ``(x, horizon) -> predictions`` on the normalized scale.
    MSE and MAE use normalized values; SMAPE and MASE use denormalized ones.
    """
    if mase_denominator not in ("target", "insample"):
        raise ValueError(f"unknown MASE denominator {mase_denominator!r}")
    fc = _forecast_fn(model, batch_size)
    if hasattr(model, "heads"):
        missing = [h for h in horizons if str(h) not in model.heads]
        if missing:
            raise ValueError(f"model has no forecast head for horizons {missing}")
    report = MetricReport(label)
    for h in sorted(horizons):
        report.excluded[h] = []
        for c in customers:
            win = customer_test_windows(c, spec, h, stride)
            if win is None:
                report.excluded[h].append(c.customer_id)
                continue
            _, x, y = win
            pred = np.asarray(fc(x, h), dtype=np.float64)
            pd, yd, xd = c.stats.denormalize(pred), c.stats.denormalize(y), c.stats.denormalize(x)
            per = {"mse": [], "mae": [], "smape": [], "mase": []}
            undefined = 0
            for k in range(len(y)):
                per["mse"].append(metrics.mse(pred[k], y[k]))
                per["mae"].append(metrics.mae(pred[k], y[k]))
                per["smape"].append(metrics.smape(pd[k], yd[k]))
                q = metrics.mase(pd[k], yd[k], xd[k] if mase_denominator == "insample" else None)
                if math.isnan(q):
                    undefined += 1
                else:
                    per["mase"].append(q)
            row = {"customer_id": c.customer_id, "horizon": h}
            for m in ("mse", "mae", "smape"):
                row[m] = float(np.mean(per[m]))
            row["mase"] = float(np.mean(per["mase"])) if per["mase"] else math.nan
            row["n_windows"] = len(y)
            row["mase_excluded"] = undefined
            report.rows.append(row)
        if report.excluded[h]:
            logger.info("horizon %d: %d customers without a test window", h, len(report.excluded[h]))
    return report
