"""Causal frequency-domain encoder: STFT (real, imag) -> one latent per frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .dsp import FramingConfig, SpectrogramConfig, Waveform, _as_tensor, analysis_window, stft
from .errors import ConfigError
from .layers import CausalConv2d


@dataclass(frozen=True)
class ConvStage:
    out_channels: int
    freq_kernel: int = 5
    time_kernel: int = 3
    freq_stride: int = 4


def _default_stages():
    return (
        ConvStage(16, freq_stride=4),
        ConvStage(32, freq_stride=4),
        ConvStage(48, freq_stride=4),
        ConvStage(64, freq_stride=6),
    )


@dataclass(frozen=True)
class EncoderConfig:
    framing: FramingConfig = FramingConfig()
    n_fft: int = 720
    input_channels: int = 2
    conv_stages: tuple = field(default_factory=_default_stages)
    latent_dim: int = 16
    negative_slope: float = 0.1

    def __post_init__(self):
        if self.latent_dim <= 0:
            raise ConfigError("latent_dim must be positive")
        if self.input_channels != 2:
            raise ConfigError("encoder input is (real, imag): input_channels must be 2")
        stages = tuple(s if isinstance(s, ConvStage) else ConvStage(**s) for s in self.conv_stages)
        object.__setattr__(self, "conv_stages", stages)
        if not stages:
            raise ConfigError("encoder needs at least one conv stage")
        for s in stages:
            if s.time_kernel < 1 or s.freq_kernel < 1 or s.freq_stride < 1:
                raise ConfigError(f"invalid conv stage {s}")
        self.spectrogram  # validates n_fft against the window

    @property
    def spectrogram(self) -> SpectrogramConfig:
        return SpectrogramConfig.from_framing(self.framing, n_fft=self.n_fft)

    def freq_bins(self) -> list[int]:
        """Frequency extent entering each stage, plus the final extent."""
        bins = [self.n_fft // 2 + 1]
        for s in self.conv_stages:
            pad = s.freq_kernel // 2
            bins.append((bins[-1] + 2 * pad - s.freq_kernel) // s.freq_stride + 1)
        return bins


@dataclass
class LatentSequence:
    vectors: torch.Tensor  # [n_frames, latent_dim]
    frame_rate: float

    @property
    def n_frames(self) -> int:
        return self.vectors.shape[0]


class FrequencyEncoder(nn.Module):
    """Strided 2-D conv pyramid over the causal STFT.

    No striding is applied along time; the hop alone fixes the token rate.
    """

    def __init__(self, cfg: EncoderConfig = EncoderConfig()):
        super().__init__()
        self.cfg = cfg
        spec = cfg.spectrogram
        w = analysis_window(spec, dtype=torch.float64)
        # Unit-variance white noise maps to unit-variance STFT coefficients.
        self.input_scale = float(1.0 / torch.sqrt((w * w).sum()))
        bins = cfg.freq_bins()
        if bins[-1] < 1:
            raise ConfigError(f"frequency strides reduce {bins[0]} bins to nothing")
        convs = []
        c_in = cfg.input_channels
        for stage in cfg.conv_stages:
            convs.append(CausalConv2d(c_in, stage.out_channels, stage.freq_kernel, stage.time_kernel, stage.freq_stride))
            c_in = stage.out_channels
        self.convs = nn.ModuleList(convs)
        self.act = nn.LeakyReLU(cfg.negative_slope)
        self.proj = nn.Linear(c_in * bins[-1], cfg.latent_dim)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Waveform ``[B, T]`` -> STFT channels ``[B, 2, bins, frames]``."""
        spec = stft(x, self.cfg.spectrogram) * self.input_scale
        return torch.stack([spec.real, spec.imag], dim=1)

    def _head(self, h: torch.Tensor) -> torch.Tensor:
        b, c, f, t = h.shape
        return self.proj(h.permute(0, 3, 1, 2).reshape(b, t, c * f))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Waveform ``[B, T]`` -> latents ``[B, ceil(T / hop), latent_dim]``."""
        h = self.features(x.to(self.proj.weight.dtype))
        for conv in self.convs:
            h = self.act(conv(h))
        return self._head(h)

    def stream(self, feats: torch.Tensor, caches=None):
        """Incremental forward over feature frames ``[B, 2, bins, n]``."""
        caches = caches or [None] * len(self.convs)
        new = []
        h = feats.to(self.proj.weight.dtype)
        for conv, cache in zip(self.convs, caches):
            h, c = conv.stream(h, cache)
            h = self.act(h)
            new.append(c)
        return self._head(h), new


def encode(wave: Waveform | torch.Tensor, encoder: FrequencyEncoder) -> LatentSequence:
    x = _as_tensor(wave)
    if x.dim() != 1:
        raise ValueError("encode expects a single mono waveform")
    with torch.no_grad():
        z = encoder(x.unsqueeze(0))[0]
    return LatentSequence(z, encoder.cfg.framing.frame_rate)
