"""Contrastive, noise-mixing and denoising objectives used in pretraining.

Sample layout for one batch of B overlapping pairs: rows ``0..B-1`` are the
first views, rows ``B..2B-1`` their overlapping partners, so the partner of
sample ``i`` is ``(i + B) % 2B``.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
import torch

from ..data.types import UNKNOWN

# Instrumentation: number of similarity matrices computed, keyed by caller.
similarity_calls: Counter = Counter()


def pooled_representation(tokens: torch.Tensor) -> torch.Tensor:
    """Mean over the patch axis: (..., P, d) -> (..., d)."""
    if tokens.shape[-2] < 1:
        raise ValueError("need at least one patch")
    return tokens.mean(dim=-2)


def cosine_similarity_matrix(reps: torch.Tensor, tag: str = "cosine") -> torch.Tensor:
    """Pairwise cosine similarity; rows of zero norm get similarity 0 everywhere."""
    if not torch.isfinite(reps).all():
        raise ValueError("non-finite representation")
    similarity_calls[tag] += 1
    norms = reps.norm(dim=-1, keepdim=True)
    unit = torch.where(norms > 0, reps / norms.clamp_min(torch.finfo(reps.dtype).tiny), torch.zeros_like(reps))
    S = unit @ unit.T
    nonzero = (norms.squeeze(-1) > 0)
    eye = torch.eye(S.shape[0], dtype=torch.bool, device=S.device)
    return torch.where(eye & nonzero[:, None], torch.ones_like(S), S)


def similarity_logits(reps: torch.Tensor, kind: str = "cosine") -> torch.Tensor:
    if kind == "cosine":
        return cosine_similarity_matrix(reps)
    if kind == "dot":
        if not torch.isfinite(reps).all():
            raise ValueError("non-finite representation")
        similarity_calls["dot"] += 1
        return reps @ reps.T
    raise ValueError(f"unknown similarity {kind!r}")


def partner_index(i: int, n_samples: int) -> int:
    return (i + n_samples // 2) % n_samples


@dataclass
class FalseNegativeMask:
    """Boolean (2B, 2B) matrices; entry [i, j] True means j is excluded for anchor i."""

    fn1: np.ndarray
    fn2: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return self.fn1 | self.fn2

    @classmethod
    def empty(cls, n_samples: int) -> "FalseNegativeMask":
        z = np.zeros((n_samples, n_samples), dtype=bool)
        return cls(z, z.copy())

    def negatives_left(self, anchors=None) -> np.ndarray:
        """Count of unmasked negatives per anchor."""
        n = self.fn1.shape[0]
        anchors = range(n) if anchors is None else anchors
        out = []
        m = self.matrix
        for i in anchors:
            cand = [j for j in range(n) if j != i and j != partner_index(i, n)]
            out.append(sum(not m[i, j] for j in cand))
        return np.array(out)


def false_negative_mask(S, industries, fn_top_k: int) -> FalseNegativeMask:
    """Exclude, for every anchor, the ``fn_top_k`` most similar negatives and
    every negative sharing the anchor's primary industry.

    Negatives of anchor ``i`` are all samples except ``i`` and its partner.
    Similarity ties go to the lower index.  ``UNKNOWN`` industries never match.
    """
    S = S.detach().cpu().numpy() if isinstance(S, torch.Tensor) else np.asarray(S, dtype=float)
    n = S.shape[0]
    if S.shape != (n, n) or n % 2:
        raise ValueError(f"similarity matrix must be square with an even side, got {S.shape}")
    if len(industries) != n:
        raise ValueError(f"expected {n} industry labels, got {len(industries)}")
    n_cand = n - 2
    if fn_top_k < 0 or (fn_top_k > 0 and fn_top_k >= n_cand):
        raise ValueError(f"fn_top_k={fn_top_k} would leave no negatives among {n_cand} candidates")

    idx = np.arange(n)
    cand = np.ones((n, n), dtype=bool)
    cand[idx, idx] = False
    cand[idx, (idx + n // 2) % n] = False
    fn1 = np.zeros((n, n), dtype=bool)
    if fn_top_k:
        # non-candidates sort last; the stable sort sends ties to the lower index
        order = np.argsort(np.where(cand, -S, np.inf), axis=1, kind="stable")[:, :fn_top_k]
        fn1[idx[:, None], order] = True
    labels = np.asarray(industries, dtype=object)
    known = labels != UNKNOWN
    fn2 = cand & (labels[:, None] == labels[None, :]) & known[:, None]
    return FalseNegativeMask(fn1, fn2)


def _infonce(logits: torch.Tensor, anchors: int, positive_of, exclude: np.ndarray | None) -> torch.Tensor:
    n = logits.shape[0]
    allowed = ~torch.eye(n, dtype=torch.bool, device=logits.device)
    if exclude is not None:
        allowed &= ~torch.as_tensor(exclude, dtype=torch.bool, device=logits.device)
    rows = torch.arange(anchors, device=logits.device)
    pos = torch.as_tensor([positive_of(i) for i in range(anchors)], device=logits.device)
    allowed = allowed[:anchors].clone()
    allowed[rows, pos] = True
    negatives = allowed.sum(dim=1) - 1
    if (negatives < 1).any():
        bad = rows[negatives < 1].tolist()
        raise ValueError(f"anchors {bad} have an empty negative set")
    masked = logits[:anchors].masked_fill(~allowed, float("-inf"))
    # logsumexp subtracts the row max internally
    return (torch.logsumexp(masked, dim=1) - logits[rows, pos]).mean()


def contrastive_loss_ssl1(tokens_a, tokens_b, mask: FalseNegativeMask | np.ndarray | None, tau: float, similarity: str = "cosine"):
    """Overlap-pair InfoNCE with false negatives removed from the denominator.

    Anchors are the first views; the positive is the overlapping partner,
    which stays in the denominator alongside the unmasked negatives.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    B = tokens_a.shape[0]
    reps = pooled_representation(torch.cat([tokens_a, tokens_b], dim=0))
    logits = similarity_logits(reps, similarity) / tau
    exclude = mask.matrix if isinstance(mask, FalseNegativeMask) else mask
    return _infonce(logits, B, lambda i: i + B, exclude)


def contrastive_loss_ssl2(tokens, noisy_tokens, tau: float, similarity: str = "cosine"):
    """InfoNCE between each sample and its noise-mixed view.

    The 2M candidate set is the M clean samples plus their M noisy views;
    anchor i's denominator runs over every j != i, no false-negative mask.
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    M = tokens.shape[0]
    if noisy_tokens.shape != tokens.shape:
        raise ValueError("noisy views must match the clean views in shape")
    reps = pooled_representation(torch.cat([tokens, noisy_tokens], dim=0))
    logits = similarity_logits(reps, similarity) / tau
    return _infonce(logits, M, lambda i: i + M, None)


def noise_mix_augment(tokens, alpha: float, noise_std_ratio: float, generator: torch.Generator | None = None, num_anchors: int | None = None):
    """Blend each anchor's tokens with a randomly chosen other sample.

    Returns ``(noisy, partners)``: noisy[i] = (1-alpha)*H_i' + alpha*H_j with
    j != i uniform over the batch, where H_i' is H_i plus optional Gaussian
    noise of std noise_std_ratio*std(H_i).  No false-negative exclusion.
    """
    if not 0 <= alpha < 1:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if noise_std_ratio < 0:
        raise ValueError("noise_std_ratio must be >= 0")
    N = tokens.shape[0]
    if N < 2:
        raise ValueError("noise mixing needs at least two samples")
    A = N if num_anchors is None else num_anchors
    shift = torch.randint(1, N, (A,), generator=generator)
    partners = (torch.arange(A) + shift) % N
    base = tokens[:A]
    if noise_std_ratio > 0:
        sd = base.detach().flatten(1).std(dim=1).view(A, *([1] * (base.ndim - 1)))
        eps = torch.randn(base.shape, generator=generator, dtype=base.dtype)
        base = base + noise_std_ratio * sd * eps
    if alpha == 0:
        return base, partners
    return (1 - alpha) * base + alpha * tokens[partners], partners


def denoise_loss(reconstructed, original, beta: float = 0.01, reduction: str = "mean"):
    """Smooth-L1 between reconstruction and the clean window."""
    if reconstructed.shape != original.shape:
        raise ValueError(f"shape mismatch {tuple(reconstructed.shape)} vs {tuple(original.shape)}")
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = (reconstructed - original).abs()
    el = torch.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    if reduction == "mean":
        return el.mean()
    if reduction == "sum":
        return el.sum()
    raise ValueError(f"unknown reduction {reduction!r}")


def loss_weights(lambda1: float, lambda2: float, use_cl: bool = True, use_dn: bool = True) -> tuple[float, float, float]:
    """(w_de, w_ssl1, w_ssl2); disabled terms are dropped and the rest rescaled to sum to 1."""
    if lambda1 < 0 or lambda2 < 0 or lambda1 + lambda2 >= 1:
        raise ValueError(f"need lambda1, lambda2 >= 0 and lambda1 + lambda2 < 1 (got {lambda1}, {lambda2})")
    if use_cl and use_dn:
        return 1.0 - lambda1 - lambda2, lambda1, lambda2
    if use_dn:
        return 1.0, 0.0, 0.0
    if use_cl:
        s = lambda1 + lambda2
        if s == 0:
            raise ValueError("contrastive-only training with lambda1 = lambda2 = 0 has no objective")
        return 0.0, lambda1 / s, lambda2 / s
    raise ValueError("at least one of the contrastive or denoising terms must be enabled")


def combined_pretrain_loss(l_de, l_ssl1, l_ssl2, lambda1: float, lambda2: float, use_cl: bool = True, use_dn: bool = True):
    w_de, w1, w2 = loss_weights(lambda1, lambda2, use_cl, use_dn)
    total = 0.0
    if w_de:
        total = total + w_de * l_de
    if w1:
        total = total + w1 * l_ssl1
    if w2:
        total = total + w2 * l_ssl2
    return total
