"""Signal primitives: causal framing, STFT/iSTFT, log-mel features and WAV I/O.

All transforms share one framing convention. The stream is left-padded with
``win_length - hop_length`` zeros and right-padded to a whole number of hops,
so frame ``t`` covers unpadded samples ``[t*hop - (win - hop), (t+1)*hop)``.
A frame is therefore complete as soon as its hop has arrived, which is what
the streaming runtime relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError

SAMPLE_RATE = 24000
MEL_FLOOR = 1e-5


@dataclass
class Waveform:
    """Mono audio with its sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class FramingConfig:
    win_length: int = 720
    hop_length: int = 288
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.hop_length <= 0 or self.win_length <= 0:
            raise ConfigError("win_length and hop_length must be positive")
        if self.hop_length > self.win_length:
            raise ConfigError("hop_length may not exceed win_length")

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop_length

    @property
    def left_context(self) -> int:
        return self.win_length - self.hop_length


@dataclass(frozen=True)
class SpectrogramConfig:
    """STFT and mel settings for one resolution.

    ``win_length`` defaults to ``n_fft``. A window shorter than ``n_fft`` is
    zero-padded on the right before the FFT.
    """

    n_fft: int = 720
    hop: int = 288
    win_length: int | None = None
    window: str = "hann"
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float | None = None
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        win = self.win
        if self.n_fft < win:
            raise ConfigError(f"n_fft ({self.n_fft}) smaller than window ({win})")
        if self.hop <= 0 or self.hop > win:
            raise ConfigError(f"hop must be in (0, {win}], got {self.hop}")
        if self.window not in ("hann", "rect"):
            raise ConfigError(f"unknown window {self.window!r}")
        fmax = self.fmax_hz
        if not 0 <= self.fmin < fmax <= self.sample_rate / 2:
            raise ConfigError(f"need 0 <= fmin < fmax <= sr/2, got {self.fmin}, {fmax}")

    @property
    def win(self) -> int:
        return self.n_fft if self.win_length is None else self.win_length

    @property
    def fmax_hz(self) -> float:
        return self.sample_rate / 2 if self.fmax is None else self.fmax

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @classmethod
    def from_framing(cls, framing: FramingConfig, **kw) -> "SpectrogramConfig":
        return cls(
            n_fft=kw.pop("n_fft", framing.win_length),
            hop=framing.hop_length,
            win_length=framing.win_length,
            sample_rate=framing.sample_rate,
            **kw,
        )


ArrayLike = Union[Waveform, np.ndarray, torch.Tensor]


def _as_tensor(wave: ArrayLike) -> torch.Tensor:
    if isinstance(wave, Waveform):
        return torch.from_numpy(wave.samples)
    if isinstance(wave, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(wave))
    return wave


def frame_count(n_samples: int, cfg: FramingConfig | SpectrogramConfig = FramingConfig()) -> int:
    """Number of analysis frames for ``n_samples`` input samples."""
    if n_samples < 0:
        raise ValueError(f"n_samples must be non-negative, got {n_samples}")
    hop = cfg.hop_length if isinstance(cfg, FramingConfig) else cfg.hop
    return -(-n_samples // hop)


def analysis_window(cfg: SpectrogramConfig, dtype=torch.float64) -> torch.Tensor:
    if cfg.window == "rect":
        return torch.ones(cfg.win, dtype=dtype)
    return torch.hann_window(cfg.win, periodic=True, dtype=dtype)


def frame_signal(x: torch.Tensor, win: int, hop: int) -> torch.Tensor:
    """Causally frame ``x[..., T]`` into ``[..., n_frames, win]``."""
    n = x.shape[-1]
    n_frames = frame_count(n, FramingConfig(win, hop))
    right = n_frames * hop - n
    padded = F.pad(x, (win - hop, right))
    return padded.unfold(-1, win, hop)


def stft(wave: ArrayLike, cfg: SpectrogramConfig = SpectrogramConfig()) -> torch.Tensor:
    """Causal STFT, returning a complex tensor ``[..., n_bins, n_frames]``."""
    x = _as_tensor(wave)
    if x.shape[-1] == 0:
        raise ValueError("stft of an empty signal")
    frames = frame_signal(x, cfg.win, cfg.hop)
    frames = frames * analysis_window(cfg, dtype=x.dtype)
    spec = torch.fft.rfft(frames, n=cfg.n_fft, dim=-1)
    return spec.transpose(-1, -2)


def istft(spec: torch.Tensor, cfg: SpectrogramConfig = SpectrogramConfig()) -> torch.Tensor:
    """Weighted overlap-add inverse of :func:`stft`.

    Returns ``n_frames * hop`` samples aligned with the original stream.
    Samples whose summed squared window falls below 1e-8 are set to zero.
    """
    if spec.shape[-2] != cfg.n_bins:
        raise ValueError(f"expected {cfg.n_bins} bins, got {spec.shape[-2]}")
    real_dtype = spec.real.dtype
    win, hop = cfg.win, cfg.hop
    n_frames = spec.shape[-1]
    frames = torch.fft.irfft(spec.transpose(-1, -2), n=cfg.n_fft, dim=-1)[..., :win]
    w = analysis_window(cfg, dtype=real_dtype)
    frames = frames * w
    total = (n_frames - 1) * hop + win
    batch = frames.shape[:-2]
    flat = frames.reshape(-1, n_frames, win).transpose(1, 2)
    out = F.fold(flat, output_size=(1, total), kernel_size=(1, win), stride=(1, hop))
    norm = F.fold(
        (w * w).expand(n_frames, win).T.unsqueeze(0),
        output_size=(1, total),
        kernel_size=(1, win),
        stride=(1, hop),
    )
    out = out.reshape(*batch, total)
    norm = norm.reshape(total)
    good = norm > 1e-8
    out = torch.where(good, out / torch.where(good, norm, torch.ones_like(norm)), torch.zeros_like(out))
    return out[..., win - hop : win - hop + n_frames * hop]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def _mel_filterbank_np(n_fft: int, n_mels: int, fmin: float, fmax: float, sr: int) -> np.ndarray:
    # Each FFT bin is treated as an interval of width sr/n_fft and weighted by
    # the mean of the triangle over it, so no filter ends up empty at coarse
    # resolutions.
    n_bins = n_fft // 2 + 1
    df = sr / n_fft
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    oversample = 32
    offsets = (np.arange(oversample) + 0.5) / oversample - 0.5
    freqs = (np.arange(n_bins)[:, None] + offsets[None, :]) * df
    lo, center, hi = edges[:-2], edges[1:-1], edges[2:]
    f = freqs[None, :, :]
    up = (f - lo[:, None, None]) / (center - lo)[:, None, None]
    down = (hi[:, None, None] - f) / (hi - center)[:, None, None]
    tri = np.clip(np.minimum(up, down), 0.0, None)
    return tri.mean(axis=-1)


def mel_filterbank(cfg: SpectrogramConfig, dtype=torch.float64) -> torch.Tensor:
    """Triangular mel filterbank ``[n_mels, n_bins]`` on the HTK mel scale."""
    fb = _mel_filterbank_np(cfg.n_fft, cfg.n_mels, float(cfg.fmin), float(cfg.fmax_hz), cfg.sample_rate)
    return torch.from_numpy(fb).to(dtype)


def log_mel(wave: ArrayLike, cfg: SpectrogramConfig = SpectrogramConfig()) -> torch.Tensor:
    """``log(max(mel_fb @ |stft|, 1e-5))`` with shape ``[..., n_mels, n_frames]``."""
    x = _as_tensor(wave)
    mag = stft(x, cfg).abs()
    fb = mel_filterbank(cfg, dtype=mag.dtype)
    return torch.log(torch.clamp(fb @ mag, min=MEL_FLOOR))


# --------------------------------------------------------------------------
# WAV I/O
# --------------------------------------------------------------------------


def read_wav(path, sample_rate: int = SAMPLE_RATE, resample: bool = False) -> Waveform:
    """Read a mono 16-bit PCM WAV file.

    Files at another rate are rejected unless ``resample`` is set, in which
    case they are polyphase-resampled to ``sample_rate``.
    """
    from scipy.io import wavfile
    from scipy.signal import resample_poly

    sr, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype.kind == "f":
        x = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported sample format {data.dtype}")
    if sr != sample_rate:
        if not resample:
            raise ValueError(f"{path}: sample rate {sr} != {sample_rate} (pass resample=True)")
        g = math.gcd(sr, sample_rate)
        x = resample_poly(x, sample_rate // g, sr // g)
    return Waveform(np.clip(x, -1.0, 1.0), sample_rate)


def write_wav(path, wave: Waveform) -> None:
    from scipy.io import wavfile

    pcm = np.round(np.clip(wave.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    wavfile.write(path, wave.sample_rate, pcm)
