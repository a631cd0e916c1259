from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .rope import apply_rope


def num_patches(n: int, patch_len: int, stride: int) -> int:
    if not 1 <= stride <= patch_len <= n:
        raise ValueError(f"need 1 <= stride <= patch_len <= n (got stride={stride}, patch_len={patch_len}, n={n})")
    return (n - patch_len) // stride + 1


class PatchEmbedding(nn.Module):
    """Linear projection of each patch plus a learnable position table."""

    def __init__(self, n: int, patch_len: int, stride: int, dim: int):
        super().__init__()
        self.n, self.patch_len, self.stride = n, patch_len, stride
        self.num_patches = num_patches(n, patch_len, stride)
        self.proj = nn.Linear(patch_len, dim)
        self.pos = nn.Parameter(torch.empty(self.num_patches, dim))
        nn.init.normal_(self.pos, std=0.02)

    def patchify(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.n:
            raise ValueError(f"window length {x.shape[-1]} != configured history length {self.n}")
        return x.unfold(-1, self.patch_len, self.stride)  # (B, P, patch_len)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.proj(self.patchify(x)) + self.pos


class RotaryAttention(nn.Module):
    """Multi-head attention with rotary encoding on queries and keys.

    Used as self-attention (x_kv is x_q) in the encoder and as cross-attention
    in the denoising decoder.
    """

    def __init__(self, dim: int, heads: int, dropout: float = 0.0, rope_base: float = 10000.0):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.heads, self.head_dim, self.rope_base = heads, dim // heads, rope_base
        if self.head_dim % 2:
            raise ValueError(f"head_dim {self.head_dim} must be even for rotary encoding")
        self.wq = nn.Linear(dim, dim, bias=False)
        self.wk = nn.Linear(dim, dim, bias=False)
        self.wv = nn.Linear(dim, dim, bias=False)
        self.wo = nn.Linear(dim, dim, bias=False)
        self.drop = nn.Dropout(dropout)
        self.last_weights: torch.Tensor | None = None

    def _split(self, x):
        B, P, _ = x.shape
        return x.view(B, P, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x_q, x_kv, pos_q, pos_k, keep_weights: bool = False):
        q = apply_rope(self._split(self.wq(x_q)), pos_q, self.rope_base)
        k = apply_rope(self._split(self.wk(x_kv)), pos_k, self.rope_base)
        v = self._split(self.wv(x_kv))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = scores.softmax(dim=-1)
        if keep_weights:
            self.last_weights = weights.detach()
        out = self.drop(weights) @ v
        B, H, P, hd = out.shape
        return self.wo(out.transpose(1, 2).reshape(B, P, H * hd))


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.drop(self.fc2(self.drop(F.gelu(self.fc1(x)))))


class EncoderBlock(nn.Module):
    def __init__(self, dim, heads, ff_dim, dropout, rope_base):
        super().__init__()
        self.norm1 = nn.RMSNorm(dim)
        self.attn = RotaryAttention(dim, heads, dropout, rope_base)
        self.norm2 = nn.RMSNorm(dim)
        self.ff = FeedForward(dim, ff_dim, dropout)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, pos):
        h = self.norm1(x)
        x = x + self.drop(self.attn(h, h, pos, pos))
        return x + self.ff(self.norm2(x))


class DecoderBlock(nn.Module):
    """Cross-attention only: queries from the noisy view, keys/values from the clean overlapping view."""

    def __init__(self, dim, heads, ff_dim, dropout, rope_base):
        super().__init__()
        self.norm_q = nn.RMSNorm(dim)
        self.norm_kv = nn.RMSNorm(dim)
        self.attn = RotaryAttention(dim, heads, dropout, rope_base)
        self.norm2 = nn.RMSNorm(dim)
        self.ff = FeedForward(dim, ff_dim, dropout)
        self.drop = nn.Dropout(dropout)

    def forward(self, q, kv, pos_q, pos_k):
        kvn = self.norm_kv(kv)
        q = q + self.drop(self.attn(self.norm_q(q), kvn, pos_q, pos_k))
        return q + self.ff(self.norm2(q))


class DenoiseHead(nn.Module):
    def __init__(self, num_patches: int, dim: int, n: int):
        super().__init__()
        self.net = nn.Sequential(nn.Flatten(-2), nn.Linear(num_patches * dim, 2 * dim), nn.GELU(), nn.Linear(2 * dim, n))

    def forward(self, tokens):
        return self.net(tokens)


class ForecastHead(nn.Module):
    def __init__(self, num_patches: int, dim: int, horizon: int):
        super().__init__()
        self.horizon = horizon
        self.linear = nn.Linear(num_patches * dim, horizon)

    def forward(self, tokens):
        return self.linear(tokens.flatten(-2))
