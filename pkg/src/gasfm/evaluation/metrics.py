"""Point-forecast error metrics on 1-D arrays."""
from __future__ import annotations

import math

import numpy as np


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return pred, target


def mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((target - pred) ** 2))


def mae(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(target - pred)))


def smape(pred, target) -> float:
    """Mean of |p - y| / ((|p| + |y|) / 2), in [0, 2]; 0/0 terms count as 0.

    Expects values on the original (denormalized) scale.
    """
    pred, target = _pair(pred, target)
    denom = (np.abs(pred) + np.abs(target)) / 2.0
    num = np.abs(pred - target)
    terms = np.divide(num, denom, out=np.zeros_like(num), where=denom > 0)
    return float(np.mean(terms))


def mase(pred, target, insample=None, m: int = 1) -> float:
    """MAE scaled by the mean absolute lag-m difference.

    The scale is taken over ``insample`` when given, otherwise over the
    target itself.  Returns NaN when the scale is zero (e.g. a flat series),
    so callers can exclude and count those windows.
    """
    pred, target = _pair(pred, target)
    ref = target if insample is None else np.asarray(insample, dtype=np.float64)
    if ref.size <= m:
        raise ValueError(f"need more than m={m} points for the MASE scale")
    scale = float(np.mean(np.abs(ref[m:] - ref[:-m])))
    if scale == 0.0:
        return math.nan
    return float(np.mean(np.abs(pred - target))) / scale
