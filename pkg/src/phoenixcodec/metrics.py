"""Objective metrics and the evaluation report.

Both metrics compare a codec output against the clean reference. Log-mel
distance is the training mel loss itself, so evaluation and training
numbers are directly comparable.
"""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .bitstream import RATE_MODES
from .dsp import Waveform, write_wav
from .losses import MEL_RESOLUTIONS, mel_loss
from .nift import AugmentSpec, CONDITIONS, apply_reverb, joint_peak_normalize, mix_at_snr, synth_rir, worker_rng
from .corpus import synth_noise

SI_SNR_EPS = 1e-12
SI_SNR_CLAMP = 60.0


def si_snr(ref, est) -> float:
    """Scale-invariant SNR in dB, clamped to +/-60."""
    ref = np.asarray(getattr(ref, "samples", ref), dtype=np.float64)
    est = np.asarray(getattr(est, "samples", est), dtype=np.float64)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    energy = float(ref @ ref)
    if energy == 0:
        raise ValueError("reference is silent")
    s = (float(est @ ref) / energy) * ref
    e = est - s
    val = 10.0 * math.log10((float(s @ s) + SI_SNR_EPS) / (float(e @ e) + SI_SNR_EPS))
    return float(np.clip(val, -SI_SNR_CLAMP, SI_SNR_CLAMP))


def logmel_distance(ref, est, resolutions=MEL_RESOLUTIONS) -> float:
    return float(mel_loss(ref, est, resolutions))


@dataclass(frozen=True)
class ClipResult:
    clip_id: str
    condition: str
    rate_mode: int
    logmel_distance: float
    si_snr: float


@dataclass
class EvalReport:
    clips: list = field(default_factory=list)

    def aggregate(self) -> dict:
        """``{(condition, rate_mode): {"n", "logmel_distance", "si_snr"}}`` with per-clip means."""
        groups = defaultdict(list)
        for c in self.clips:
            groups[(c.condition, c.rate_mode)].append(c)
        out = {}
        for key, rows in sorted(groups.items()):
            out[key] = {
                "n": len(rows),
                "logmel_distance": float(np.mean([r.logmel_distance for r in rows])),
                "si_snr": float(np.mean([r.si_snr for r in rows])),
            }
        return out

    def mean(self, metric: str, condition: str | None = None, rate_mode: int | None = None) -> float:
        vals = [
            getattr(c, metric)
            for c in self.clips
            if (condition is None or c.condition == condition) and (rate_mode is None or c.rate_mode == rate_mode)
        ]
        if not vals:
            raise KeyError(f"no clips for condition={condition} rate_mode={rate_mode}")
        return float(np.mean(vals))

    def to_json(self) -> str:
        agg = [{"condition": k[0], "rate_mode": k[1], **v} for k, v in self.aggregate().items()]
        return json.dumps({"aggregate": agg, "clips": [asdict(c) for c in self.clips]}, indent=2)

    def table(self) -> str:
        rows = [f"{'condition':<10} {'rate':>5} {'n':>4} {'logmel':>9} {'si_snr':>8}"]
        for (cond, mode), v in self.aggregate().items():
            kbps = RATE_MODES[mode]
            rows.append(f"{cond:<10} {kbps:>4}k {v['n']:>4} {v['logmel_distance']:>9.4f} {v['si_snr']:>8.2f}")
        return "\n".join(rows)


def degrade(clip: np.ndarray, condition: str, rng: np.random.Generator, spec: AugmentSpec = AugmentSpec()):
    """Return ``(input, target)`` for one evaluation condition."""
    clip = np.asarray(clip, dtype=np.float64)
    if condition == "clean":
        x = clip.copy()
    elif condition == "noisy":
        x = mix_at_snr(clip, synth_noise(clip.shape[0], rng), float(rng.uniform(*spec.snr_range_db)))
    elif condition == "reverb":
        x = apply_reverb(clip, synth_rir(spec.rir, rng))
    else:
        raise ValueError(f"unknown condition {condition!r}")
    x, target, _ = joint_peak_normalize(x, clip, spec.peak)
    return x, target


def assign_conditions(n_clips: int, conditions=CONDITIONS) -> list[str]:
    """Round-robin assignment: every clip lands in exactly one condition."""
    conditions = tuple(conditions)
    return [conditions[i % len(conditions)] for i in range(n_clips)]


def evaluate(
    model,
    clips,
    clip_ids=None,
    conditions=CONDITIONS,
    rate_modes=(0, 1),
    seed: int = 0,
    spec: AugmentSpec = AugmentSpec(),
    wav_dir=None,
) -> EvalReport:
    """Run every clip through the codec under its assigned condition.

    ``wav_dir``, when given, receives ``<id>_<cond>_<rate>_{ref,in,out}.wav``
    so external quality tools can be run on the same pairs.
    """
    clip_ids = clip_ids or [f"clip{i:03d}" for i in range(len(clips))]
    assigned = assign_conditions(len(clips), conditions)
    dtype = model.decoder.output_conv.weight.dtype
    if wav_dir is not None:
        wav_dir = Path(wav_dir)
        wav_dir.mkdir(parents=True, exist_ok=True)
    report = EvalReport()
    for i, (clip, cid, cond) in enumerate(zip(clips, clip_ids, assigned)):
        x, ref = degrade(clip, cond, worker_rng(seed, 1, i), spec)
        for mode in rate_modes:
            est = model.reconstruct(torch.from_numpy(x).to(dtype), RATE_MODES[mode]).double().numpy()
            report.clips.append(ClipResult(cid, cond, mode, logmel_distance(ref, est), si_snr(ref, est)))
            if wav_dir is not None:
                stem = wav_dir / f"{cid}_{cond}_{RATE_MODES[mode]}k"
                write_wav(f"{stem}_ref.wav", Waveform(ref))
                write_wav(f"{stem}_in.wav", Waveform(x))
                write_wav(f"{stem}_out.wav", Waveform(np.clip(est, -1, 1)))
    return report
