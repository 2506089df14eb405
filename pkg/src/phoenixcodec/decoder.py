"""Causal time-domain decoder: latents at the frame rate -> 24 kHz waveform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .errors import ConfigError
from .layers import CausalConv1d, CausalConvTranspose1d


@dataclass(frozen=True)
class DecoderConfig:
    latent_dim: int = 16
    upsample_factors: tuple = (6, 6, 8)
    stage_channels: tuple = (128, 64, 32, 16)
    input_kernel: int = 7
    output_kernel: int = 7
    res_kernel: int = 3
    res_dilations: tuple = (1, 3)
    negative_slope: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "upsample_factors", tuple(self.upsample_factors))
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        object.__setattr__(self, "res_dilations", tuple(self.res_dilations))
        if len(self.stage_channels) != len(self.upsample_factors) + 1:
            raise ConfigError("need one more stage channel count than upsample factors")
        if any(f < 1 for f in self.upsample_factors):
            raise ConfigError("upsample factors must be positive")

    @property
    def hop_length(self) -> int:
        return math.prod(self.upsample_factors)


class ResUnit(nn.Module):
    def __init__(self, channels, kernel, dilation, slope):
        super().__init__()
        self.act = nn.LeakyReLU(slope)
        self.conv = CausalConv1d(channels, channels, kernel, dilation=dilation)

    def forward(self, x):
        return x + self.conv(self.act(x))

    def stream(self, x, cache=None):
        y, cache = self.conv.stream(self.act(x), cache)
        return x + y, cache


class TimeDecoder(nn.Module):
    """Transposed-conv upsampler with dilated residual units after each stage.

    Every layer is causal with zero lookahead, so output sample ``j`` depends
    only on latent frames ``t <= j // hop``.
    """

    def __init__(self, cfg: DecoderConfig = DecoderConfig()):
        super().__init__()
        self.cfg = cfg
        ch = cfg.stage_channels
        slope = cfg.negative_slope
        self.act = nn.LeakyReLU(slope)
        self.input_conv = CausalConv1d(cfg.latent_dim, ch[0], cfg.input_kernel)
        self.upsamples = nn.ModuleList()
        self.blocks = nn.ModuleList()
        for i, f in enumerate(cfg.upsample_factors):
            self.upsamples.append(CausalConvTranspose1d(ch[i], ch[i + 1], 2 * f, f))
            self.blocks.append(
                nn.ModuleList(ResUnit(ch[i + 1], cfg.res_kernel, d, slope) for d in cfg.res_dilations)
            )
        self.output_conv = CausalConv1d(ch[-1], 1, cfg.output_kernel)

    def forward(self, latents: torch.Tensor) -> torch.Tensor:
        """``[B, frames, D]`` -> ``[B, frames * hop]`` in [-1, 1]."""
        h = self.input_conv(latents.transpose(1, 2).to(self.output_conv.weight.dtype))
        for up, units in zip(self.upsamples, self.blocks):
            h = up(self.act(h))
            for unit in units:
                h = unit(h)
        return torch.tanh(self.output_conv(self.act(h))).squeeze(1)

    def stream(self, latents: torch.Tensor, caches=None):
        """Incremental forward; ``caches`` is the list returned by the previous call."""
        caches = list(caches) if caches else [None] * self.n_caches
        new = []
        it = iter(caches)
        h, c = self.input_conv.stream(latents.transpose(1, 2).to(self.output_conv.weight.dtype), next(it))
        new.append(c)
        for up, units in zip(self.upsamples, self.blocks):
            h, c = up.stream(self.act(h), next(it))
            new.append(c)
            for unit in units:
                h, c = unit.stream(h, next(it))
                new.append(c)
        y, c = self.output_conv.stream(self.act(h), next(it))
        new.append(c)
        return torch.tanh(y).squeeze(1), new

    @property
    def n_caches(self) -> int:
        return 2 + len(self.upsamples) + sum(len(u) for u in self.blocks)
