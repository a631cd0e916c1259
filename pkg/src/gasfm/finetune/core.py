from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..config import FinetuneConfig
from ..data.types import NormalizationStats
from ..data.windows import PreparedCustomer, WindowIndex
from ..model.network import GasFM, clone_model

logger = logging.getLogger(__name__)


class IncompatibleCheckpoint(ValueError):
    pass


def decay_weights(horizon: int, dtype=torch.float64) -> torch.Tensor:
    """l**-0.5 for l = 1..horizon (distance from the forecast start)."""
    return torch.arange(1, horizon + 1, dtype=dtype) ** -0.5


def signal_decay_loss(pred: torch.Tensor, target: torch.Tensor, reduction: str = "mean", weights: torch.Tensor | None = None):
    """Squared error weighted by l**-0.5 along the horizon axis.

    ``mean`` averages over batch and horizon; ``sum`` sums over the horizon and
    averages over the batch.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    if pred.ndim != 2 or pred.shape[1] < 1:
        raise ValueError("expected (batch, horizon) tensors with horizon >= 1")
    w = decay_weights(pred.shape[1], pred.dtype) if weights is None else weights.to(pred.dtype)
    err = w * (pred - target) ** 2
    if reduction == "mean":
        return err.mean()
    if reduction == "sum":
        return err.sum(dim=1).mean()
    raise ValueError(f"unknown reduction {reduction!r}")


@dataclass
class FinetuneResult:
    model: GasFM
    val_curve: list[float] = field(default_factory=list)
    best_epoch: int = 0
    log: list[dict] = field(default_factory=list)


def check_compatible(model: GasFM, history_len: int, horizon: int) -> None:
    if model.history_len != history_len:
        raise IncompatibleCheckpoint(f"history_len: checkpoint has {model.history_len}, data uses {history_len}")
    if horizon > model.cfg.max_horizon:
        raise IncompatibleCheckpoint(f"max_horizon: checkpoint allows {model.cfg.max_horizon}, requested {horizon}")


@torch.no_grad()
def batched_forecast(model: GasFM, x: np.ndarray, horizon: int, batch_size: int = 1024) -> np.ndarray:
    model.eval()
    out = []
    for i in range(0, len(x), batch_size):
        xb = torch.as_tensor(x[i : i + batch_size], dtype=torch.float32)
        out.append(model.forecast(xb, horizon).double().numpy())
    return np.concatenate(out) if out else np.empty((0, horizon))


def _val_subset(index: WindowIndex, cap: int, seed: int) -> WindowIndex:
    if len(index) <= cap:
        return index
    pick = np.sort(np.random.default_rng(seed).choice(len(index), size=cap, replace=False))
    return index.subset(pick)


def finetune(
    model: GasFM,
    customers: list[PreparedCustomer],
    cfg: FinetuneConfig,
    seed: int,
    guard=None,
    log_path=None,
    history_len: int | None = None,
) -> FinetuneResult:
    """Supervised fine-tuning for one horizon; the input model is left untouched.

    A fresh forecast head is attached, then training runs on the customers'
    training windows with the signal-decay loss.  The epoch with the lowest
    validation MSE is returned.  ``history_len`` is the window length the
    data was prepared for; it defaults to the model's own.
    """
    h = cfg.horizon
    n = model.history_len if history_len is None else history_len
    check_compatible(model, n, h)
    torch.manual_seed(seed)
    model = clone_model(model)
    model.add_forecast_head(h)
    if cfg.freeze_encoder:
        for p in model.encoder_parameters():
            p.requires_grad_(False)

    train_idx = WindowIndex(customers, "train", n, h)
    val_idx = _val_subset(WindowIndex(customers, "val", n, h), cfg.max_val_windows, seed)
    if cfg.epochs and len(train_idx) == 0:
        raise ValueError(f"no training windows for horizon {h}")
    xv, yv = val_idx.arrays()

    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=cfg.lr)
    total = max(1, cfg.epochs * cfg.steps_per_epoch)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: 0.5 * (1 + math.cos(math.pi * min(s, total) / total)))
    rng = np.random.default_rng(seed)

    result = FinetuneResult(model)
    best_state, best_val, stale = None, math.inf, 0
    fh = open(log_path, "w") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            losses = []
            for _ in range(cfg.steps_per_epoch):
                pick = rng.integers(0, len(train_idx), size=cfg.batch_size)
                if guard is not None:
                    guard({customers[c].customer_id for c in train_idx.cust[pick]})
                x, y = train_idx.arrays(pick)
                pred = model.forecast(torch.as_tensor(x, dtype=torch.float32), h)
                loss = signal_decay_loss(pred, torch.as_tensor(y, dtype=torch.float32), cfg.loss_reduction)
                opt.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(params, 1.0)
                opt.step()
                sched.step()
                losses.append(float(loss.detach()))
            val_mse = float(np.mean((batched_forecast(model, xv, h) - yv) ** 2)) if len(xv) else float(np.mean(losses))
            result.val_curve.append(val_mse)
            rec = {"epoch": epoch, "seed": seed, "train_loss": float(np.mean(losses)), "val_mse": val_mse, "lr": opt.param_groups[0]["lr"]}
            result.log.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
            if val_mse < best_val:
                best_val, best_state, stale = val_mse, {k: v.clone() for k, v in model.state_dict().items()}, 0
                result.best_epoch = epoch
            else:
                stale += 1
                if stale >= cfg.patience:
                    logger.info("early stop at epoch %d (best %d)", epoch, result.best_epoch)
                    break
    finally:
        if fh:
            fh.close()
    if best_state is not None:
        model.load_state_dict(best_state)
    for p in model.parameters():
        p.requires_grad_(True)
    model.eval()
    return result


@dataclass
class ForecastResult:
    customer_id: str
    origin: int
    origin_date: dt.date | None
    predictions: np.ndarray
    predictions_denorm: np.ndarray


def predict(model: GasFM, window, horizon: int, stats: NormalizationStats, origin: int = 0, origin_date=None) -> ForecastResult:
    """Forecast ``horizon`` days from one normalized history window."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.history_len,):
        raise ValueError(f"expected a window of length {model.history_len}, got {window.shape}")
    if not np.all(np.isfinite(window)):
        raise ValueError("history window must be fully observed")
    if str(horizon) not in model.heads:
        raise ValueError(f"model has no head for horizon {horizon}")
    pred = batched_forecast(model, window[None, :], horizon)[0]
    return ForecastResult(stats.customer_id, origin, origin_date, pred, stats.denormalize(pred))


FORECAST_FIELDS = ("customer_id", "origin_date", "step", "prediction", "prediction_denorm", "target", "target_denorm")


def write_forecasts(path, rows) -> None:
    """rows: iterables of (ForecastResult, target_normalized, stats)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_FIELDS)
        for res, target, stats in rows:
            tden = stats.denormalize(target)
            od = res.origin_date.isoformat() if res.origin_date else str(res.origin)
            for s in range(len(res.predictions)):
                w.writerow([res.customer_id, od, s + 1, repr(float(res.predictions[s])), repr(float(res.predictions_denorm[s])), repr(float(target[s])), repr(float(tden[s]))])
