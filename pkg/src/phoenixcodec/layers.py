"""Causal convolution layers with an incremental (cached) forward.

Every layer here has ``forward(x)`` for whole sequences and
``stream(x, cache) -> (y, cache)`` for chunks. Feeding a sequence through
``stream`` in any chunking reproduces ``forward`` up to float rounding.
A ``cache`` of ``None`` means a fresh stream.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class CausalConv1d(nn.Conv1d):
    def __init__(self, in_channels, out_channels, kernel_size, dilation=1, bias=True):
        super().__init__(in_channels, out_channels, kernel_size, dilation=dilation, bias=bias)
        self.context = (kernel_size - 1) * dilation

    lookahead = 0

    def forward(self, x):
        return super().forward(F.pad(x, (self.context, 0)))

    def stream(self, x, cache=None):
        if self.context == 0:
            return super().forward(x), None
        if cache is None:
            cache = x.new_zeros(*x.shape[:-1], self.context)
        full = torch.cat([cache, x], dim=-1)
        return super().forward(full), full[..., -self.context :]


class CausalConvTranspose1d(nn.ConvTranspose1d):
    """Upsampling by ``stride`` with the overhanging tail trimmed on the right.

    Output block ``t`` (``stride`` samples) depends only on input frames
    ``<= t``, so the layer adds no lookahead.
    """

    lookahead = 0

    def __init__(self, in_channels, out_channels, kernel_size, stride, bias=True):
        if kernel_size < stride:
            raise ValueError("kernel_size must be at least stride")
        super().__init__(in_channels, out_channels, kernel_size, stride=stride, bias=bias)
        self.history = -(-(kernel_size - stride) // stride)

    def forward(self, x):
        y = super().forward(x)
        return y[..., : x.shape[-1] * self.stride[0]]

    def stream(self, x, cache=None):
        s = self.stride[0]
        n = x.shape[-1]
        if self.history == 0:
            return self.forward(x), None
        if cache is None:
            cache = x.new_zeros(*x.shape[:-1], self.history)
        full = torch.cat([cache, x], dim=-1)
        y = super().forward(full)
        start = self.history * s
        return y[..., start : start + n * s], full[..., -self.history :]


class CausalConv2d(nn.Conv2d):
    """2-D conv over ``[B, C, freq, time]``, causal along time only."""

    lookahead = 0

    def __init__(self, in_channels, out_channels, freq_kernel, time_kernel, freq_stride, bias=True):
        super().__init__(
            in_channels,
            out_channels,
            (freq_kernel, time_kernel),
            stride=(freq_stride, 1),
            padding=(freq_kernel // 2, 0),
            bias=bias,
        )
        self.context = time_kernel - 1

    def forward(self, x):
        return super().forward(F.pad(x, (self.context, 0)))

    def stream(self, x, cache=None):
        if self.context == 0:
            return super().forward(x), None
        if cache is None:
            cache = x.new_zeros(*x.shape[:-1], self.context)
        full = torch.cat([cache, x], dim=-1)
        return super().forward(full), full[..., -self.context :]
