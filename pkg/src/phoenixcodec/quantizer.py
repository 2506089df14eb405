"""Residual vector quantization with depth truncation (1 kbps / 6 kbps).

Codebooks are learned by exponential moving averages of the residuals
assigned to each entry; the encoder sees a commitment loss and a
straight-through gradient. Entries whose usage count decays below a
threshold are re-seeded from residuals in the current batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import ConfigError, IndexRangeError

BITS_PER_CODE = 12


@dataclass(frozen=True)
class RvqConfig:
    latent_dim: int = 16
    max_depth: int = 6
    codebook_size: int = 4096
    commitment_beta: float = 0.25
    ema_decay: float = 0.99
    dead_threshold: float = 1e-3
    eps: float = 1e-5

    def __post_init__(self):
        if self.max_depth < 1 or self.latent_dim < 1 or self.codebook_size < 1:
            raise ConfigError("max_depth, latent_dim and codebook_size must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError("ema_decay must be in (0, 1)")

    @property
    def bits_per_code(self) -> int:
        return int(math.ceil(math.log2(self.codebook_size)))

    def bits_per_frame(self, depth: int) -> int:
        return depth * self.bits_per_code


def bitrate(depth: int, frame_rate: float = 24000 / 288, bits_per_code: int = BITS_PER_CODE) -> float:
    """Payload bits per second at ``depth`` codes per frame."""
    return depth * bits_per_code * frame_rate


class ResidualVQ(nn.Module):
    def __init__(self, cfg: RvqConfig = RvqConfig()):
        super().__init__()
        self.cfg = cfg
        shape = (cfg.max_depth, cfg.codebook_size, cfg.latent_dim)
        self.register_buffer("codebooks", torch.randn(shape) * 0.1)
        self.register_buffer("ema_counts", torch.zeros(shape[:2]))
        self.register_buffer("ema_sums", self.codebooks.clone())

    def _check_depth(self, depth: int):
        if not 1 <= depth <= self.cfg.max_depth:
            raise ValueError(f"depth must be in [1, {self.cfg.max_depth}], got {depth}")

    @staticmethod
    def nearest(x: torch.Tensor, entries: torch.Tensor) -> torch.Tensor:
        """Index of the closest entry (squared Euclidean) for each row of ``x``."""
        d = (x * x).sum(-1, keepdim=True) - 2.0 * x @ entries.T + (entries * entries).sum(-1)
        return d.argmin(dim=-1)

    def forward(self, latents: torch.Tensor, depth: int | None = None):
        """Quantize ``latents[..., D]`` with the first ``depth`` codebooks.

        Returns ``(codes[..., depth], quantized[..., D], vq_loss)``. In training
        mode the codebooks are updated after the codes are chosen, so the
        returned ``quantized`` always corresponds to ``codes`` under the
        codebooks that were in place on entry.
        """
        depth = self.cfg.max_depth if depth is None else depth
        self._check_depth(depth)
        lead = latents.shape[:-1]
        flat = latents.reshape(-1, self.cfg.latent_dim)
        residual = flat.detach()
        quantized = torch.zeros_like(residual)
        codes = []
        for k in range(depth):
            entries = self.codebooks[k].to(residual.dtype)
            idx = self.nearest(residual, entries)
            chosen = entries[idx]
            if self.training:
                self._ema_update(k, residual, idx)
            codes.append(idx)
            quantized = quantized + chosen
            residual = residual - chosen
        codes = torch.stack(codes, dim=-1).reshape(*lead, depth)
        quantized = quantized.reshape_as(latents)
        vq_loss = self.cfg.commitment_beta * torch.mean((latents - quantized.detach()) ** 2)
        if not (torch.is_grad_enabled() and latents.requires_grad):
            # No gradient to route: return the exact sum so dequantize(codes) matches bitwise.
            return codes, quantized.to(latents.dtype), vq_loss
        quantized_st = latents + (quantized - latents).detach()
        return codes, quantized_st, vq_loss

    @torch.no_grad()
    def _ema_update(self, k: int, residual: torch.Tensor, idx: torch.Tensor):
        cfg = self.cfg
        r = residual.to(self.ema_sums.dtype)
        onehot = torch.zeros(r.shape[0], cfg.codebook_size, dtype=r.dtype, device=r.device)
        onehot.scatter_(1, idx.unsqueeze(1), 1.0)
        self.ema_counts[k].mul_(cfg.ema_decay).add_(onehot.sum(0), alpha=1 - cfg.ema_decay)
        self.ema_sums[k].mul_(cfg.ema_decay).add_(onehot.T @ r, alpha=1 - cfg.ema_decay)
        counts = self.ema_counts[k]
        total = counts.sum()
        smoothed = (counts + cfg.eps) / (total + cfg.codebook_size * cfg.eps) * total
        self.codebooks[k].copy_(self.ema_sums[k] / smoothed.clamp_min(1e-12).unsqueeze(1))

        dead = counts < cfg.dead_threshold
        n_dead = int(dead.sum())
        if n_dead:
            pick = torch.randint(0, r.shape[0], (n_dead,), device=r.device)
            fresh = r[pick] + 1e-3 * r.std() * torch.randn(n_dead, r.shape[1], dtype=r.dtype, device=r.device)
            self.codebooks[k][dead] = fresh
            self.ema_sums[k][dead] = fresh
            self.ema_counts[k][dead] = 1.0

    def quantize(self, latents: torch.Tensor, depth: int):
        """Inference-style quantization without touching the EMA state."""
        was = self.training
        self.eval()
        try:
            with torch.no_grad():
                return self.forward(latents, depth)
        finally:
            self.train(was)

    def dequantize(self, codes: torch.Tensor) -> torch.Tensor:
        """Sum of addressed entries; ``codes[..., depth]`` -> ``[..., D]``."""
        codes = torch.as_tensor(codes, dtype=torch.long)
        depth = codes.shape[-1]
        self._check_depth(depth)
        if codes.numel() and (codes.min() < 0 or codes.max() >= self.cfg.codebook_size):
            raise IndexRangeError(f"code index outside [0, {self.cfg.codebook_size})")
        out = torch.zeros(*codes.shape[:-1], self.cfg.latent_dim, dtype=self.codebooks.dtype)
        for k in range(depth):
            out = out + self.codebooks[k][codes[..., k]]
        return out


@dataclass
class CodebookHealth:
    perplexity: list[float]
    dead: list[int]


def codebook_health(state, threshold: float = 1e-3) -> CodebookHealth:
    """Usage perplexity and dead-entry count per codebook.

    ``state`` is a :class:`ResidualVQ` or an array of EMA counts
    ``[n_codebooks, codebook_size]`` (a 1-D array is one codebook).
    """
    counts = state.ema_counts if isinstance(state, ResidualVQ) else state
    counts = np.atleast_2d(np.asarray(torch.as_tensor(counts, dtype=torch.float64)))
    perplexity, dead = [], []
    for row in counts:
        total = row.sum()
        if total <= 0:
            perplexity.append(0.0)
        else:
            p = row[row > 0] / total
            perplexity.append(float(np.exp(-(p * np.log(p)).sum())))
        dead.append(int((row < threshold).sum()))
    return CodebookHealth(perplexity, dead)
