"""Clip manifests and synthetic stand-ins for speech and noise corpora.

Manifest format: one clip per line, tab-separated::

    clip_id <TAB> path <TAB> duration_seconds <TAB> split

Blank lines and lines starting with ``#`` are ignored. Relative paths are
resolved against the manifest's directory. Noise and RIR manifests use the
same layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal

from .dsp import SAMPLE_RATE, Waveform, read_wav, write_wav


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    path: Path
    duration: float
    split: str


def read_manifest(path, split: str | None = None) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        clip_id, p, dur, sp = cols
        clip_path = Path(p)
        if not clip_path.is_absolute():
            clip_path = path.parent / clip_path
        if sp not in ("train", "val", "test"):
            raise ValueError(f"{path}:{lineno}: unknown split {sp!r}")
        entries.append(ManifestEntry(clip_id, clip_path, float(dur), sp))
    ids = [e.clip_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate clip ids")
    if split is not None:
        entries = [e for e in entries if e.split == split]
    return entries


def write_manifest(path, entries) -> None:
    path = Path(path)
    lines = ["# clip_id\tpath\tduration\tsplit"]
    for e in entries:
        p = e.path
        try:
            p = Path(p).relative_to(path.parent)
        except ValueError:
            pass
        lines.append(f"{e.clip_id}\t{p}\t{e.duration:.6f}\t{e.split}")
    path.write_text("\n".join(lines) + "\n")


def load_clips(entries, resample: bool = False) -> list[np.ndarray]:
    return [read_wav(e.path, resample=resample).samples for e in entries]


# --------------------------------------------------------------------------
# Synthetic signals
# --------------------------------------------------------------------------

# Rough formant frequencies (Hz) and bandwidths for five vowels.
_VOWELS = np.array(
    [
        [730, 1090, 2440, 3400],
        [530, 1840, 2480, 3500],
        [270, 2290, 3010, 3700],
        [570, 840, 2410, 3300],
        [300, 870, 2240, 3200],
    ],
    dtype=np.float64,
)
_BANDWIDTHS = np.array([80, 100, 140, 200], dtype=np.float64)


def _resonator(freq, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    theta = 2 * np.pi * freq / sr
    a = np.array([1.0, -2 * r * np.cos(theta), r * r])
    return np.array([a.sum()]), a


def synth_speech(duration: float, rng: np.random.Generator, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Vowel/fricative babble: a pulse train through moving formant resonators.

    Not speech, but it has a pitch, formant structure, syllabic envelopes and
    unvoiced bursts, which is what the codec needs to learn something real.
    """
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    f0_base = rng.uniform(90, 220)
    pos = 0
    while pos < n:
        seg = int(rng.uniform(0.12, 0.3) * sample_rate)
        seg = min(seg, n - pos)
        t = np.arange(seg) / sample_rate
        env = np.sin(np.pi * np.linspace(0, 1, seg)) ** 0.7
        if rng.random() < 0.2:
            # unvoiced: band-passed noise
            lo = rng.uniform(2500, 4500)
            sos = signal.butter(4, [lo, min(lo * 2.2, 0.45 * sample_rate)], "bandpass", fs=sample_rate, output="sos")
            burst = signal.sosfilt(sos, rng.standard_normal(seg)) * 0.5
            out[pos : pos + seg] = burst * env * rng.uniform(0.2, 0.6)
        elif rng.random() < 0.1:
            pass  # pause
        else:
            f0 = f0_base * (1 + 0.15 * rng.uniform(-1, 1)) * (1 + 0.05 * np.sin(2 * np.pi * rng.uniform(2, 6) * t))
            f0 *= np.linspace(1.0, rng.uniform(0.85, 1.15), seg)
            phase = np.cumsum(f0 / sample_rate)
            pulses = np.diff(np.floor(phase), prepend=0.0)
            # glottal shaping: two real poles
            src = signal.lfilter([1.0], [1.0, -1.8, 0.81], pulses)
            src = src - src.mean()
            src += 0.02 * rng.standard_normal(seg)
            v0, v1 = rng.integers(0, len(_VOWELS), 2)
            block = 96
            y = np.zeros(seg)
            zis = [np.zeros(2) for _ in range(4)]
            for b0 in range(0, seg, block):
                frac = b0 / max(seg - 1, 1)
                formants = (1 - frac) * _VOWELS[v0] + frac * _VOWELS[v1]
                chunk = src[b0 : b0 + block]
                for i, (f, bw) in enumerate(zip(formants, _BANDWIDTHS)):
                    bcoef, acoef = _resonator(f, bw, sample_rate)
                    chunk, zis[i] = signal.lfilter(bcoef, acoef, chunk, zi=zis[i])
                y[b0 : b0 + block] = chunk
            y = signal.lfilter([1.0, -0.9], [1.0], y)  # lip radiation
            peak = np.abs(y).max()
            if peak > 0:
                y /= peak
            out[pos : pos + seg] = y * env * rng.uniform(0.4, 0.9)
        pos += seg
    peak = np.abs(out).max()
    if peak > 0:
        out *= rng.uniform(0.5, 0.8) / peak
    return out


def synth_noise(n: int, rng: np.random.Generator, kind: str | None = None) -> np.ndarray:
    """White, pink or a random mixture of both, unit RMS."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spec.shape[0], dtype=np.float64)
    f[0] = 1.0
    pink = np.fft.irfft(spec / np.sqrt(f), n=n)
    if kind == "white":
        x = white
    elif kind == "pink":
        x = pink
    elif kind is None:
        a = rng.uniform(0, 1)
        x = a * white / white.std() + (1 - a) * pink / pink.std()
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return x / np.sqrt(np.mean(x * x))


def make_synthetic_corpus(
    root,
    n_clips: int = 10,
    duration: float = 3.0,
    seed: int = 0,
    val_fraction: float = 0.0,
) -> Path:
    """Write ``n_clips`` synthetic clips as WAV files plus a manifest; return its path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_val = int(round(n_clips * val_fraction))
    entries = []
    for i in range(n_clips):
        x = synth_speech(duration, rng)
        p = root / f"clip{i:03d}.wav"
        write_wav(p, Waveform(x))
        split = "val" if i >= n_clips - n_val else "train"
        entries.append(ManifestEntry(f"clip{i:03d}", p, duration, split))
    manifest = root / "manifest.tsv"
    write_manifest(manifest, entries)
    return manifest
