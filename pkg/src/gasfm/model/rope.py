"""Rotary position embedding (interleaved-pair convention)."""
from __future__ import annotations

import torch


def rope_frequencies(head_dim: int, base: float = 10000.0, dtype=torch.float32, device=None) -> torch.Tensor:
    if head_dim % 2:
        raise ValueError(f"rotary embedding needs an even head_dim, got {head_dim}")
    j = torch.arange(0, head_dim // 2, dtype=dtype, device=device)
    return base ** (-2.0 * j / head_dim)


def apply_rope(x: torch.Tensor, positions, base: float = 10000.0) -> torch.Tensor:
    """Rotate dimension pairs (2j, 2j+1) of ``x`` by ``position * base**(-2j/d)``.

    x: (..., seq, head_dim); positions: scalar or (seq,), may be fractional.
    """
    d = x.shape[-1]
    theta = rope_frequencies(d, base, dtype=x.dtype, device=x.device)
    pos = torch.as_tensor(positions, dtype=x.dtype, device=x.device)
    if pos.ndim == 0:
        pos = pos.reshape(1)
    angles = pos[:, None] * theta[None, :]  # (seq, d/2)
    cos, sin = angles.cos(), angles.sin()
    x_even, x_odd = x[..., 0::2], x[..., 1::2]
    out = torch.empty_like(x)
    out[..., 0::2] = x_even * cos - x_odd * sin
    out[..., 1::2] = x_even * sin + x_odd * cos
    return out


def rope_pair(q: torch.Tensor, k: torch.Tensor, pos_q, pos_k, base: float = 10000.0):
    """Rotate a single query and key vector at their own positions."""
    return apply_rope(q[None, :], pos_q, base)[0], apply_rope(k[None, :], pos_k, base)[0]
