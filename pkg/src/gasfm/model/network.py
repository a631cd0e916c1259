from __future__ import annotations

import io
import json
from pathlib import Path

import torch
import torch.nn as nn

from ..config import ModelConfig
from .layers import DecoderBlock, DenoiseHead, EncoderBlock, ForecastHead, PatchEmbedding

CHECKPOINT_SCHEMA = "gasfm.checkpoint/1"


class CheckpointError(ValueError):
    pass


class GasFM(nn.Module):
    """Patch encoder with a denoising decoder and per-horizon forecast heads."""

    def __init__(self, cfg: ModelConfig, history_len: int = 96):
        super().__init__()
        self.cfg = cfg
        self.history_len = history_len
        d = cfg.model_dim
        self.patch = PatchEmbedding(history_len, cfg.patch_len, cfg.patch_stride, d)
        self.num_patches = self.patch.num_patches
        self.encoder = nn.ModuleList(
            EncoderBlock(d, cfg.heads, cfg.feedforward_dim, cfg.dropout, cfg.rope_base) for _ in range(cfg.encoder_layers)
        )
        self.decoder = nn.ModuleList(
            DecoderBlock(d, cfg.heads, cfg.feedforward_dim, cfg.dropout, cfg.rope_base) for _ in range(cfg.decoder_layers)
        )
        self.denoise_head = DenoiseHead(self.num_patches, d, history_len)
        self.heads = nn.ModuleDict()

    # -- building blocks -------------------------------------------------
    def positions(self, offset: float = 0.0) -> torch.Tensor:
        return torch.arange(self.num_patches, dtype=self.patch.pos.dtype) + offset

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(x).all():
            raise ValueError("input window contains non-finite values")
        return self.patch(x)

    def encode(self, tokens: torch.Tensor) -> torch.Tensor:
        pos = self.positions()
        for i, block in enumerate(self.encoder):
            tokens = block(tokens, pos)
            if not torch.isfinite(tokens).all():
                raise FloatingPointError(f"non-finite activations after encoder layer {i}")
        return tokens

    def decode(self, noisy: torch.Tensor, clean: torch.Tensor, kv_offset: float = 0.0) -> torch.Tensor:
        """Cross-attend noisy-view tokens over clean overlapping-view tokens.

        ``kv_offset`` is the start of the clean view relative to the noisy one,
        in patch-stride units; it shifts the key positions for the rotary
        encoding so attention sees the true time alignment of the two views.
        """
        if noisy.shape != clean.shape:
            raise ValueError(f"decoder inputs must share shape, got {tuple(noisy.shape)} and {tuple(clean.shape)}")
        pos_q, pos_k = self.positions(), self.positions(kv_offset)
        h = noisy
        for block in self.decoder:
            h = block(h, clean, pos_q, pos_k)
        return h

    def decode_denoise(self, noisy: torch.Tensor, clean: torch.Tensor, kv_offset: float = 0.0) -> torch.Tensor:
        return self.denoise_head(self.decode(noisy, clean, kv_offset))

    # -- forecasting -----------------------------------------------------
    def add_forecast_head(self, horizon: int) -> ForecastHead:
        """Create (or re-create) the head for ``horizon`` with fresh weights."""
        if not 1 <= horizon <= self.cfg.max_horizon:
            raise ValueError(f"horizon {horizon} outside [1, {self.cfg.max_horizon}]")
        head = ForecastHead(self.num_patches, self.cfg.model_dim, horizon).to(self.patch.pos.dtype)
        self.heads[str(horizon)] = head
        return head

    def forecast_head(self, tokens: torch.Tensor, horizon: int) -> torch.Tensor:
        if horizon > self.cfg.max_horizon:
            raise ValueError(f"horizon {horizon} exceeds configured maximum {self.cfg.max_horizon}")
        if str(horizon) not in self.heads:
            raise KeyError(f"no forecast head for horizon {horizon}; available: {sorted(int(h) for h in self.heads)}")
        return self.heads[str(horizon)](tokens)

    def forecast(self, x: torch.Tensor, horizon: int) -> torch.Tensor:
        if self.cfg.revin:
            mu = x.mean(-1, keepdim=True)
            sd = x.std(-1, keepdim=True, unbiased=False) + 1e-5
            return self.forecast_head(self.encode(self.embed((x - mu) / sd)), horizon) * sd + mu
        return self.forecast_head(self.encode(self.embed(x)), horizon)

    def encoder_parameters(self):
        yield from self.patch.parameters()
        yield from self.encoder.parameters()


def build_model(cfg: ModelConfig, history_len: int = 96, seed: int | None = None) -> GasFM:
    if seed is not None:
        torch.manual_seed(seed)
    return GasFM(cfg, history_len)


def save_checkpoint(model: GasFM, path, extra: dict | None = None) -> None:
    """Write config JSON plus named tensors into one torch archive."""
    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "model_config": model.cfg.model_dump(mode="json"),
        "history_len": model.history_len,
        "horizons": sorted(int(h) for h in model.heads),
        "extra": extra or {},
    }
    payload = {"meta": json.dumps(meta, sort_keys=True), "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()}}
    buf = io.BytesIO()
    torch.save(payload, buf)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> GasFM:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=True)
    meta = json.loads(payload["meta"])
    if meta.get("schema") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"{path}: unsupported checkpoint schema {meta.get('schema')!r}")
    model = GasFM(ModelConfig.model_validate(meta["model_config"]), meta["history_len"])
    for h in meta["horizons"]:
        model.add_forecast_head(int(h))
    model.load_state_dict(payload["state_dict"])
    model.checkpoint_extra = meta.get("extra", {})
    return model


def clone_model(model: GasFM) -> GasFM:
    other = GasFM(model.cfg, model.history_len)
    for h in model.heads:
        other.add_forecast_head(int(h))
    other.load_state_dict(model.state_dict())
    return other
