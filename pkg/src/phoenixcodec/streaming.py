"""Chunked, stateful encode/decode and structural latency accounting.

A :class:`StreamingEncoder` emits one code frame per completed hop; a
:class:`StreamingDecoder` emits one hop of audio per code frame. Both hold
only past context, so any chunking of the same stream yields the same
output as the offline path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .budget import codec_layers
from .dsp import FramingConfig, analysis_window
from .model import CodecConfig, PhoenixCodec

LATENCY_BOUND_MS = 30.0


@dataclass
class StreamingEncoderState:
    context: np.ndarray  # last win - hop input samples
    pending: np.ndarray = field(default_factory=lambda: np.zeros(0))
    caches: list | None = None
    frames_emitted: int = 0
    samples_seen: int = 0


@dataclass
class StreamingDecoderState:
    caches: list | None = None
    samples_emitted: int = 0


class StreamingEncoder:
    """Feeds arbitrary chunks, returns codes ``[n_new_frames, depth]`` per push."""

    def __init__(self, model: PhoenixCodec, depth: int):
        model.quantizer._check_depth(depth)
        self.model = model
        self.depth = depth
        framing = model.cfg.framing
        self.hop = framing.hop_length
        self.win = framing.win_length
        spec = model.cfg.encoder.spectrogram
        self.n_fft = spec.n_fft
        self.dtype = model.encoder.proj.weight.dtype
        self.window = analysis_window(spec, dtype=self.dtype)
        self.state = self.fresh_state()

    def fresh_state(self) -> StreamingEncoderState:
        return StreamingEncoderState(context=np.zeros(self.win - self.hop))

    def reset(self):
        self.state = self.fresh_state()

    @torch.no_grad()
    def _emit(self, samples: np.ndarray) -> torch.Tensor:
        """Encode ``n * hop`` fresh samples following the current context."""
        st = self.state
        n = samples.shape[0] // self.hop
        buf = torch.from_numpy(np.concatenate([st.context, samples])).to(self.dtype)
        frames = buf.unfold(-1, self.win, self.hop) * self.window
        spec = torch.fft.rfft(frames, n=self.n_fft, dim=-1).transpose(-1, -2) * self.model.encoder.input_scale
        feats = torch.stack([spec.real, spec.imag], dim=0).unsqueeze(0)
        z, st.caches = self.model.encoder.stream(feats, st.caches)
        codes, _, _ = self.model.quantizer.quantize(z, self.depth)
        st.context = buf[-(self.win - self.hop) :].numpy().astype(np.float64) if self.win > self.hop else st.context
        st.frames_emitted += n
        return codes[0]

    def push_samples(self, chunk) -> torch.Tensor:
        chunk = np.asarray(getattr(chunk, "samples", chunk), dtype=np.float64).reshape(-1)
        st = self.state
        st.samples_seen += chunk.shape[0]
        data = np.concatenate([st.pending, chunk])
        n = data.shape[0] // self.hop
        st.pending = data[n * self.hop :]
        if n == 0:
            return torch.zeros(0, self.depth, dtype=torch.long)
        return self._emit(data[: n * self.hop])

    def flush(self) -> torch.Tensor:
        """Zero-pad a partial final hop and emit its frame."""
        st = self.state
        if st.pending.shape[0] == 0:
            return torch.zeros(0, self.depth, dtype=torch.long)
        data = np.concatenate([st.pending, np.zeros(self.hop - st.pending.shape[0])])
        st.pending = np.zeros(0)
        return self._emit(data)


class StreamingDecoder:
    """Feeds code frames, returns ``hop`` samples per frame."""

    def __init__(self, model: PhoenixCodec, depth: int):
        model.quantizer._check_depth(depth)
        self.model = model
        self.depth = depth
        self.state = StreamingDecoderState()

    def reset(self):
        self.state = StreamingDecoderState()

    @torch.no_grad()
    def push_codes(self, frames) -> torch.Tensor:
        frames = torch.as_tensor(np.asarray(frames), dtype=torch.long)
        if frames.numel() == 0:
            return torch.zeros(0, dtype=self.model.decoder.output_conv.weight.dtype)
        if frames.dim() != 2 or frames.shape[1] != self.depth:
            raise ValueError(f"expected frames of depth {self.depth}, got shape {tuple(frames.shape)}")
        zq = self.model.quantizer.dequantize(frames).unsqueeze(0)
        zq = zq.to(self.model.decoder.output_conv.weight.dtype)
        y, self.state.caches = self.model.decoder.stream(zq, self.state.caches)
        self.state.samples_emitted += y.shape[-1]
        return y[0]


def stream_encode(model: PhoenixCodec, wave, depth: int, chunks) -> torch.Tensor:
    """Run a whole signal through :class:`StreamingEncoder` with the given chunk sizes (cycled)."""
    x = np.asarray(getattr(wave, "samples", wave), dtype=np.float64)
    enc = StreamingEncoder(model, depth)
    out, pos, i = [], 0, 0
    chunks = list(chunks)
    while pos < x.shape[0]:
        size = max(int(chunks[i % len(chunks)]), 0)
        out.append(enc.push_samples(x[pos : pos + size]))
        pos += size
        i += 1
        if size == 0 and all(c == 0 for c in chunks):
            raise ValueError("chunk schedule makes no progress")
    out.append(enc.flush())
    return torch.cat(out, dim=0)


def stream_decode(model: PhoenixCodec, codes, depth: int, chunks=(1,)) -> torch.Tensor:
    codes = torch.as_tensor(np.asarray(codes), dtype=torch.long)
    dec = StreamingDecoder(model, depth)
    out, pos, i = [], 0, 0
    chunks = [max(int(c), 1) for c in chunks]
    while pos < codes.shape[0]:
        size = chunks[i % len(chunks)]
        out.append(dec.push_codes(codes[pos : pos + size]))
        pos += size
        i += 1
    if not out:
        return torch.zeros(0)
    return torch.cat(out)


# --------------------------------------------------------------------------
# Latency
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LatencyReport:
    window_samples: int
    lookahead_samples: int
    sample_rate: int
    flagged: tuple = ()

    @property
    def samples(self) -> int:
        return self.window_samples + self.lookahead_samples

    @property
    def ms(self) -> float:
        return 1000.0 * self.samples / self.sample_rate

    @property
    def passed(self) -> bool:
        return self.ms <= LATENCY_BOUND_MS


def latency_report(framing: FramingConfig, layers=()) -> LatencyReport:
    """Window length plus every layer's lookahead (in output samples)."""
    flagged = tuple(s.name for s in layers if s.lookahead)
    return LatencyReport(
        framing.win_length, sum(s.lookahead for s in layers), framing.sample_rate, flagged
    )


def measured_latency(config: CodecConfig | FramingConfig = None, layers=None) -> float:
    """Algorithmic latency in milliseconds, derived from the configuration alone."""
    if config is None:
        config = CodecConfig()
    if isinstance(config, FramingConfig):
        return latency_report(config, layers or ()).ms
    if layers is None:
        layers = codec_layers(config)
    return latency_report(config.framing, layers).ms


__all__ = [
    "StreamingEncoder",
    "StreamingDecoder",
    "stream_encode",
    "stream_decode",
    "measured_latency",
    "latency_report",
    "LatencyReport",
]
