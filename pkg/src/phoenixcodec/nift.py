"""Noise-invariant fine-tuning data: degraded inputs paired with clean targets.

Each pair is one of three disjoint conditions drawn with ``mix_ratios``:
the clean clip itself, the clip plus noise at an SNR drawn uniformly from
``snr_range_db``, or the clip convolved with a room impulse response. The
target is always the clean clip. When the degraded input would clip, one
gain is applied to input and target alike and recorded on the pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .corpus import synth_noise
from .errors import SilentClipError

CONDITIONS = ("clean", "noisy", "reverb")


@dataclass(frozen=True)
class RirSpec:
    decay_range: tuple = (0.1, 0.5)  # RT60 in seconds
    direct_delay: float = 0.002
    tail_gain: float = 0.5  # expected tail energy / direct-path energy, before the delay
    sample_rate: int = 24000


@dataclass(frozen=True)
class AugmentSpec:
    mix_ratios: tuple = (1 / 3, 1 / 3, 1 / 3)
    snr_range_db: tuple = (10.0, 30.0)
    rir: RirSpec = field(default_factory=RirSpec)
    peak: float = 0.99
    rng_seed: int = 0

    def __post_init__(self):
        r = np.asarray(self.mix_ratios, dtype=np.float64)
        if r.shape != (3,) or np.any(r < 0) or not math.isclose(r.sum(), 1.0, abs_tol=1e-9):
            raise ValueError(f"mix_ratios must be 3 non-negative values summing to 1, got {self.mix_ratios}")
        lo, hi = self.snr_range_db
        if not lo < hi:
            raise ValueError(f"snr_range_db must be increasing, got {self.snr_range_db}")


@dataclass(frozen=True)
class TrainingPair:
    input: np.ndarray
    target: np.ndarray
    condition: str
    clip_index: int
    gain: float = 1.0
    snr_db: float | None = None


def _power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


def fit_length(noise: np.ndarray, n: int) -> np.ndarray:
    """Loop or crop ``noise`` to exactly ``n`` samples."""
    if noise.shape[0] == 0:
        raise ValueError("empty noise signal")
    reps = -(-n // noise.shape[0])
    return np.tile(noise, reps)[:n]


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float) -> np.ndarray:
    """``clean + g * noise`` with ``g`` chosen so the clean/noise power ratio is ``snr_db``."""
    clean = np.asarray(clean, dtype=np.float64)
    noise = fit_length(np.asarray(noise, dtype=np.float64), clean.shape[0])
    p_clean, p_noise = _power(clean), _power(noise)
    if p_clean == 0:
        raise SilentClipError("clean clip is silent")
    if p_noise == 0:
        raise ValueError("noise signal is silent")
    g = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    return clean + g * noise


def measure_snr(mix: np.ndarray, clean: np.ndarray) -> float:
    """``10 log10(P_clean / P_residual)``; ``inf`` when the residual is zero."""
    mix, clean = np.asarray(mix, dtype=np.float64), np.asarray(clean, dtype=np.float64)
    if mix.shape != clean.shape:
        raise ValueError(f"length mismatch: {mix.shape} vs {clean.shape}")
    p_res = _power(mix - clean)
    if p_res == 0:
        return math.inf
    return 10.0 * math.log10(_power(clean) / p_res)


def apply_reverb(clean: np.ndarray, rir: np.ndarray) -> np.ndarray:
    """Causal convolution with ``rir``, truncated to the input length."""
    rir = np.asarray(rir, dtype=np.float64)
    if rir.size == 0:
        raise ValueError("empty impulse response")
    if not np.all(np.isfinite(rir)) or not np.any(rir):
        raise ValueError("impulse response must be finite and non-zero")
    clean = np.asarray(clean, dtype=np.float64)
    if rir.size > 64 and clean.size > 64:
        y = signal.fftconvolve(clean, rir)
    else:
        y = np.convolve(clean, rir)
    return y[: clean.shape[0]]


def synth_rir(spec: RirSpec, rng: np.random.Generator, rt60: float | None = None) -> np.ndarray:
    """Exponentially decaying noise tail behind a unit direct path, unit energy overall.

    ``rt60`` overrides the random draw from ``spec.decay_range``. The decay
    constant is ``rt60 / ln(1000)`` (60 dB of energy decay).
    """
    sr = spec.sample_rate
    if rt60 is None:
        rt60 = rng.uniform(*spec.decay_range)
    tau = rt60 / math.log(1000.0)
    length = max(int(math.ceil(rt60 * sr)), 2)
    h = np.zeros(length)
    h[0] = 1.0
    start = max(1, int(round(spec.direct_delay * sr)))
    if start < length:
        t = np.arange(start, length) / sr
        tail = rng.standard_normal(length - start) * np.exp(-t / tau) if tau > 0 else np.zeros(length - start)
        # Amplitude such that a tail starting at t=0 would carry tail_gain of the
        # direct-path energy; the delayed part keeps its exponential share.
        amp = np.sqrt(spec.tail_gain * -np.expm1(-2.0 / (sr * tau))) if tau > 0 else 0.0
        h[start:] = amp * tail
    return h / np.sqrt(np.sum(h * h))


def joint_peak_normalize(x: np.ndarray, target: np.ndarray, peak: float = 0.99):
    """Scale both signals by one gain so that ``max|x| <= peak``."""
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m <= peak:
        return x, target, 1.0
    g = peak / m
    return x * g, target * g, g


def worker_rng(seed: int, worker_id: int = 0, batch_index: int = 0) -> np.random.Generator:
    """Independent generator for one (worker, batch) under a run seed."""
    return np.random.default_rng(np.random.SeedSequence([seed, worker_id, batch_index]))


def compose_batch(
    corpus,
    spec: AugmentSpec,
    rng: np.random.Generator,
    size: int,
    segment: int | None = None,
    noises=None,
    rirs=None,
) -> list[TrainingPair]:
    """Draw ``size`` training pairs from ``corpus`` (a sequence of clean clips).

    ``segment`` crops a random window of that many samples (shorter clips are
    zero-padded). ``noises``/``rirs`` are optional pools of real signals;
    without them noise and RIRs are synthesized. Silent crops are skipped
    and redrawn.
    """
    if len(corpus) == 0:
        raise ValueError("empty corpus")
    pairs = []
    attempts = 0
    while len(pairs) < size:
        attempts += 1
        if attempts > 100 * size + 100:
            raise ValueError("corpus yields only silent clips")
        idx = int(rng.integers(len(corpus)))
        clip = np.asarray(corpus[idx], dtype=np.float64)
        if segment is not None:
            if clip.shape[0] < segment:
                clip = np.pad(clip, (0, segment - clip.shape[0]))
            off = int(rng.integers(clip.shape[0] - segment + 1))
            clip = clip[off : off + segment]
        cond = CONDITIONS[int(rng.choice(3, p=spec.mix_ratios))]
        snr = None
        try:
            if _power(clip) == 0:
                raise SilentClipError("clean clip is silent")
            if cond == "clean":
                x = clip.copy()
            elif cond == "noisy":
                snr = float(rng.uniform(*spec.snr_range_db))
                if noises:
                    noise = np.asarray(noises[int(rng.integers(len(noises)))], dtype=np.float64)
                    off = int(rng.integers(max(noise.shape[0] - clip.shape[0], 0) + 1))
                    noise = noise[off:]
                else:
                    noise = synth_noise(clip.shape[0], rng)
                x = mix_at_snr(clip, noise, snr)
            else:
                rir = rirs[int(rng.integers(len(rirs)))] if rirs else synth_rir(spec.rir, rng)
                x = apply_reverb(clip, rir)
        except SilentClipError:
            continue
        x, target, g = joint_peak_normalize(x, clip, spec.peak)
        pairs.append(TrainingPair(x, target, cond, idx, g, snr))
    return pairs
