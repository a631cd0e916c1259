from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from ..config import PretrainConfig
from ..data.windows import PreparedCustomer, overlap_offset, overlap_sample
from ..model.network import GasFM
from . import losses as L

logger = logging.getLogger(__name__)


class ProvenanceError(RuntimeError):
    pass


class ProvenanceGuard:
    """Asserts that only customers from an allowed set reach a gradient step."""

    def __init__(self, allowed_ids, label: str = ""):
        self.allowed = frozenset(allowed_ids)
        self.label = label
        self.checked = 0
        self.violations = 0

    def __call__(self, customer_ids) -> None:
        self.checked += 1
        bad = sorted(set(customer_ids) - self.allowed)
        if bad:
            self.violations += 1
            raise ProvenanceError(f"{self.label}: held-out customers in a gradient step: {bad[:5]}")


@dataclass
class AugmentedBatch:
    windows_a: torch.Tensor
    windows_b: torch.Tensor
    industries: list[str]
    customer_ids: list[str]
    offset: int

    @property
    def pairs(self) -> int:
        return self.windows_a.shape[0]

    def sample_industries(self) -> list[str]:
        """Labels for all 2B samples (partner shares the anchor's label)."""
        return self.industries + self.industries


@dataclass
class PretrainResult:
    model: GasFM
    log: list[dict] = field(default_factory=list)


def sample_batch(customers: list[PreparedCustomer], n: int, batch_pairs: int, overlap_ratio: float, rng) -> AugmentedBatch:
    """One overlapping pair from each of ``batch_pairs`` distinct customers (training regions only)."""
    offset = overlap_offset(n, overlap_ratio)
    k = min(batch_pairs, len(customers))
    chosen = rng.choice(len(customers), size=k, replace=False)
    a, b, ind, ids = [], [], [], []
    for ci in chosen:
        c = customers[ci]
        draw = overlap_sample(c.z, n, overlap_ratio, rng, c.train)
        a.append(draw[0])
        b.append(draw[1])
        ind.append(c.industry)
        ids.append(c.customer_id)
    return AugmentedBatch(
        torch.tensor(np.stack(a), dtype=torch.float32),
        torch.tensor(np.stack(b), dtype=torch.float32),
        ind,
        ids,
        offset,
    )


def pretrain_losses(model: GasFM, batch: AugmentedBatch, cfg: PretrainConfig, generator: torch.Generator, use_fn: bool | None = None):
    """Forward pass for one batch; returns dict of scalar tensors (missing terms are absent)."""
    lc = cfg.loss
    use_fn = cfg.use_fn if use_fn is None else use_fn
    B = batch.pairs
    tok_a, tok_b = model.embed(batch.windows_a), model.embed(batch.windows_b)
    noisy_tok, _ = L.noise_mix_augment(torch.cat([tok_a, tok_b]), lc.alpha, lc.noise_std_ratio, generator, num_anchors=B)
    z_a, z_b = model.encode(tok_a), model.encode(tok_b)
    z_noisy = model.encode(noisy_tok)

    out = {}
    if cfg.use_cl:
        if use_fn:
            S = L.cosine_similarity_matrix(L.pooled_representation(torch.cat([z_a, z_b])).detach(), tag="fn_mask")
            mask = L.false_negative_mask(S, batch.sample_industries(), lc.fn_top_k)
        else:
            mask = L.FalseNegativeMask.empty(2 * B)
        out["mask"] = mask
        out["l_ssl1"] = L.contrastive_loss_ssl1(z_a, z_b, mask, lc.tau, lc.similarity)
        out["l_ssl2"] = L.contrastive_loss_ssl2(z_a, z_noisy, lc.tau, lc.similarity)
    if cfg.use_dn:
        kv_offset = batch.offset / model.cfg.patch_stride
        recon = model.decode_denoise(z_noisy, z_b, kv_offset)
        out["l_de"] = L.denoise_loss(recon, batch.windows_a, lc.beta, lc.denoise_reduction)
    out["loss"] = L.combined_pretrain_loss(
        out.get("l_de"), out.get("l_ssl1"), out.get("l_ssl2"), lc.lambda1, lc.lambda2, cfg.use_cl, cfg.use_dn
    )
    return out


def pretrain(
    model: GasFM,
    customers: list[PreparedCustomer],
    cfg: PretrainConfig,
    seed: int,
    guard=None,
    log_path=None,
) -> PretrainResult:
    """Self-supervised pretraining on the training regions of ``customers``.

    The model is updated in place and also returned.
    """
    n = model.history_len
    offset = overlap_offset(n, cfg.overlap_ratio)
    pool = [c for c in customers if len(c.train) >= n + offset]
    if len(pool) < 2:
        raise ValueError(f"pretraining needs >= 2 customers with a training region of {n + offset} days, got {len(pool)}")

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    gen = torch.Generator().manual_seed(seed)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    total = max(1, cfg.steps)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: 0.5 * (1 + math.cos(math.pi * min(s, total) / total)))

    log = []
    fh = open(log_path, "w") if log_path else None
    try:
        model.train()
        for step in range(1, cfg.steps + 1):
            for attempt in range(20):
                batch = sample_batch(pool, n, cfg.batch_size, cfg.overlap_ratio, rng)
                try:
                    out = pretrain_losses(model, batch, cfg, gen)
                    break
                except ValueError as exc:
                    if "empty negative set" not in str(exc):
                        raise
            else:
                raise RuntimeError("could not draw a batch with non-empty negative sets in 20 attempts")
            if guard is not None:
                guard(batch.customer_ids)
            opt.zero_grad()
            out["loss"].backward()
            torch.nn.utils.clip_grad_norm_(params, 1.0)
            opt.step()
            sched.step()
            if step % cfg.log_every == 0 or step == cfg.steps:
                rec = {"step": step, "seed": seed, "lr": opt.param_groups[0]["lr"], "loss": float(out["loss"].detach())}
                for k in ("l_de", "l_ssl1", "l_ssl2"):
                    rec[k] = float(out[k].detach()) if k in out else None
                log.append(rec)
                if fh:
                    fh.write(json.dumps(rec) + "\n")
                logger.debug("pretrain %s", rec)
    finally:
        if fh:
            fh.close()
    model.eval()
    return PretrainResult(model, log)
