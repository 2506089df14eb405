"""Multi-period and multi-resolution discriminators (training only)."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .dsp import SpectrogramConfig, stft
from .errors import ConfigError


@dataclass(frozen=True)
class MpdConfig:
    periods: tuple = (2, 3, 5, 7, 11)
    channels: tuple = (16, 32, 64, 64)
    kernel: int = 5
    stride: int = 3

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "channels", tuple(self.channels))
        if len(set(self.periods)) != len(self.periods) or min(self.periods) < 2:
            raise ConfigError("MPD periods must be distinct and >= 2")


@dataclass(frozen=True)
class MrdConfig:
    resolutions: tuple = ((256, 64), (512, 128), (1024, 256))
    channels: int = 16
    n_layers: int = 4

    def __post_init__(self):
        res = tuple(tuple(r) for r in self.resolutions)
        object.__setattr__(self, "resolutions", res)
        if len(set(res)) != len(res):
            raise ConfigError("MRD resolutions must be distinct")


@dataclass
class DiscriminatorOutput:
    logits: list = field(default_factory=list)
    features: list = field(default_factory=list)

    def __len__(self):
        return len(self.logits)


def period_reshape(x: torch.Tensor, period: int) -> torch.Tensor:
    """``[B, T]`` -> ``[B, 1, ceil(T / p), p]``, zero-padding on the right."""
    pad = (-x.shape[-1]) % period
    x = F.pad(x, (0, pad))
    return x.reshape(x.shape[0], 1, -1, period)


class PeriodBranch(nn.Module):
    def __init__(self, period: int, cfg: MpdConfig):
        super().__init__()
        self.period = period
        k = cfg.kernel
        layers, c_in = [], 1
        for c in cfg.channels:
            layers.append(nn.Conv2d(c_in, c, (k, 1), (cfg.stride, 1), padding=(k // 2, 0)))
            c_in = c
        layers.append(nn.Conv2d(c_in, c_in, (k, 1), 1, padding=(k // 2, 0)))
        self.layers = nn.ModuleList(layers)
        self.post = nn.Conv2d(c_in, 1, (3, 1), 1, padding=(1, 0))

    def forward(self, x):
        h = period_reshape(x, self.period)
        feats = []
        for layer in self.layers:
            h = F.leaky_relu(layer(h), 0.1)
            feats.append(h)
        h = self.post(h)
        feats.append(h)
        return h.flatten(1), feats


class ResolutionBranch(nn.Module):
    def __init__(self, n_fft: int, hop: int, cfg: MrdConfig):
        super().__init__()
        self.spec = SpectrogramConfig(n_fft=n_fft, hop=hop)
        c = cfg.channels
        layers = [nn.Conv2d(1, c, (3, 9), stride=(1, 2), padding=(1, 4))]
        for _ in range(cfg.n_layers - 1):
            layers.append(nn.Conv2d(c, c, (3, 9), stride=(1, 2), padding=(1, 4)))
        layers.append(nn.Conv2d(c, c, (3, 3), padding=(1, 1)))
        self.layers = nn.ModuleList(layers)
        self.post = nn.Conv2d(c, 1, (3, 3), padding=(1, 1))

    def forward(self, x):
        # [B, 1, frames, bins]
        h = stft(x, self.spec).abs().transpose(1, 2).unsqueeze(1)
        feats = []
        for layer in self.layers:
            h = F.leaky_relu(layer(h), 0.1)
            feats.append(h)
        h = self.post(h)
        feats.append(h)
        return h.flatten(1), feats


class Discriminator(nn.Module):
    """MPD branches followed by MRD branches, in config order."""

    def __init__(self, mpd: MpdConfig = MpdConfig(), mrd: MrdConfig = MrdConfig()):
        super().__init__()
        self.mpd_cfg, self.mrd_cfg = mpd, mrd
        self.branches = nn.ModuleList(
            [PeriodBranch(p, mpd) for p in mpd.periods]
            + [ResolutionBranch(n, h, mrd) for n, h in mrd.resolutions]
        )

    @property
    def min_length(self) -> int:
        return max(max(self.mpd_cfg.periods), max(n for n, _ in self.mrd_cfg.resolutions))

    def forward(self, wave: torch.Tensor) -> DiscriminatorOutput:
        if wave.dim() == 1:
            wave = wave.unsqueeze(0)
        if wave.shape[-1] < self.min_length:
            raise ValueError(f"input of {wave.shape[-1]} samples shorter than minimum {self.min_length}")
        out = DiscriminatorOutput()
        wave = wave.to(self.branches[0].post.weight.dtype)
        for branch in self.branches:
            logit, feats = branch(wave)
            out.logits.append(logit)
            out.features.append(feats)
        return out


def discriminate(wave, disc: Discriminator) -> DiscriminatorOutput:
    x = wave if isinstance(wave, torch.Tensor) else torch.as_tensor(getattr(wave, "samples", wave))
    return disc(x)
