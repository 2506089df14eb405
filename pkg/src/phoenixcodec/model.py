"""The full codec (encoder, residual quantizer, decoder) and its checkpoint format.

Checkpoints are ``.npz`` archives holding one array per state-dict entry plus
a ``__meta__`` entry: UTF-8 JSON bytes with ``format``, ``version``, the
codec ``config`` and any extra metadata (for training runs, the CCR state).
They load with ``allow_pickle=False`` and round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .config import from_dict, to_dict
from .decoder import DecoderConfig, TimeDecoder
from .dsp import FramingConfig, frame_count
from .encoder import EncoderConfig, FrequencyEncoder
from .errors import ConfigError
from .quantizer import ResidualVQ, RvqConfig

CHECKPOINT_FORMAT = "phoenixcodec-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class CodecConfig:
    framing: FramingConfig = field(default_factory=FramingConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    rvq: RvqConfig = field(default_factory=RvqConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)

    def __post_init__(self):
        if self.encoder.framing != self.framing:
            raise ConfigError("encoder framing differs from codec framing")
        if not self.encoder.latent_dim == self.rvq.latent_dim == self.decoder.latent_dim:
            raise ConfigError(
                f"latent_dim mismatch: encoder {self.encoder.latent_dim}, "
                f"rvq {self.rvq.latent_dim}, decoder {self.decoder.latent_dim}"
            )
        if self.decoder.hop_length != self.framing.hop_length:
            raise ConfigError(
                f"decoder upsamples by {self.decoder.hop_length}, hop is {self.framing.hop_length}"
            )

    @classmethod
    def from_dict(cls, data) -> "CodecConfig":
        return from_dict(cls, data, "codec")


class PhoenixCodec(nn.Module):
    def __init__(self, cfg: CodecConfig = CodecConfig()):
        super().__init__()
        self.cfg = cfg
        self.encoder = FrequencyEncoder(cfg.encoder)
        self.quantizer = ResidualVQ(cfg.rvq)
        self.decoder = TimeDecoder(cfg.decoder)

    @property
    def hop(self) -> int:
        return self.cfg.framing.hop_length

    def forward(self, wave: torch.Tensor, depth: int | None = None):
        """Training/analysis pass: ``wave[B, T]`` -> ``(recon[B, T'], codes, vq_loss)``.

        ``T' = ceil(T / hop) * hop``.
        """
        z = self.encoder(wave)
        codes, zq, vq_loss = self.quantizer(z, depth)
        return self.decoder(zq), codes, vq_loss

    @torch.no_grad()
    def compress(self, wave: torch.Tensor, depth: int) -> torch.Tensor:
        """Mono waveform ``[T]`` -> codes ``[frames, depth]``."""
        z = self.encoder(torch.as_tensor(wave).unsqueeze(0))
        codes, _, _ = self.quantizer.quantize(z, depth)
        return codes[0]

    @torch.no_grad()
    def decompress(self, codes) -> torch.Tensor:
        """Codes ``[frames, depth]`` -> waveform ``[frames * hop]``."""
        zq = self.quantizer.dequantize(torch.as_tensor(codes)).unsqueeze(0)
        return self.decoder(zq.to(self.decoder.output_conv.weight.dtype))[0]

    @torch.no_grad()
    def reconstruct(self, wave: torch.Tensor, depth: int) -> torch.Tensor:
        wave = torch.as_tensor(wave)
        n = wave.shape[-1]
        out = self.decompress(self.compress(wave, depth))
        assert out.shape[-1] == frame_count(n, self.cfg.framing) * self.hop
        return out[:n]


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_tensors(path, tensors: dict, meta: dict) -> None:
    arrays = {k: v.detach().cpu().numpy() if isinstance(v, torch.Tensor) else np.asarray(v) for k, v in tensors.items()}
    if "__meta__" in arrays:
        raise ValueError("'__meta__' is reserved")
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, **meta}
    arrays["__meta__"] = np.frombuffer(json.dumps(header, allow_nan=True).encode(), dtype=np.uint8)
    path = Path(path)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_tensors(path) -> tuple[dict, dict]:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    raw = arrays.pop("__meta__", None)
    if raw is None:
        raise ValueError(f"{path}: not a checkpoint (no metadata)")
    meta = json.loads(raw.tobytes().decode())
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unknown format {meta.get('format')!r}")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    return {k: torch.from_numpy(v) for k, v in arrays.items()}, meta


def save_codec(path, model: PhoenixCodec, **meta) -> None:
    save_tensors(path, model.state_dict(), {"config": to_dict(model.cfg), **meta})


def load_codec(path) -> tuple[PhoenixCodec, dict]:
    tensors, meta = load_tensors(path)
    cfg = CodecConfig.from_dict(meta["config"])
    model = PhoenixCodec(cfg)
    if tensors.get("decoder.output_conv.weight", torch.empty(0)).dtype == torch.float64:
        model.double()
    expected = model.state_dict()
    missing = set(expected) - set(tensors)
    extra = set(tensors) - set(expected)
    if missing or extra:
        raise ConfigError(f"checkpoint/config mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for k, v in tensors.items():
        if tuple(v.shape) != tuple(expected[k].shape):
            raise ConfigError(f"{k}: checkpoint shape {tuple(v.shape)} != config shape {tuple(expected[k].shape)}")
    model.load_state_dict(tensors)
    model.eval()
    return model, meta
