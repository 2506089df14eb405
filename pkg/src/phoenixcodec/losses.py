"""Generator and discriminator objectives.

L_G = L_mel + lam_vq * L_vq + lam_fm * L_fm + lam_adv * L_adv, with a
least-squares adversarial term and L1 feature matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import torch

from .dsp import SpectrogramConfig, _as_tensor, log_mel
from .errors import TrainingDivergenceError

MEL_RESOLUTIONS = (
    SpectrogramConfig(n_fft=256, hop=64, n_mels=64),
    SpectrogramConfig(n_fft=512, hop=128, n_mels=80),
    SpectrogramConfig(n_fft=1024, hop=256, n_mels=96),
)


@dataclass(frozen=True)
class LossWeights:
    vq: float = 1.0
    fm: float = 2.0
    adv: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"loss weight {f.name} must be finite and >= 0, got {v}")


@dataclass
class LossBreakdown:
    mel: torch.Tensor | float
    vq: torch.Tensor | float
    fm: torch.Tensor | float
    adv_g: torch.Tensor | float
    total: torch.Tensor | float
    adv_d: torch.Tensor | float | None = None

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = None if v is None else float(v.detach() if isinstance(v, torch.Tensor) else v)
        return out


def mel_loss(ref, est, resolutions=MEL_RESOLUTIONS) -> torch.Tensor:
    """Sum over resolutions of the mean absolute log-mel difference."""
    r, e = _as_tensor(ref), _as_tensor(est)
    if r.shape[-1] != e.shape[-1]:
        raise ValueError(f"length mismatch: {r.shape[-1]} vs {e.shape[-1]}")
    return torch.stack([(log_mel(r, cfg) - log_mel(e, cfg)).abs().mean() for cfg in resolutions]).sum()


def _check_structure(a, b, what):
    if len(a) != len(b):
        raise ValueError(f"{what}: {len(a)} branches vs {len(b)}")


def fm_loss(real_out, fake_out) -> torch.Tensor:
    """Mean over branches and layers of mean |real - fake| (real detached)."""
    _check_structure(real_out.features, fake_out.features, "feature matching")
    terms = []
    for rf, ff in zip(real_out.features, fake_out.features):
        if len(rf) != len(ff):
            raise ValueError("feature matching: layer count mismatch")
        for r, f in zip(rf, ff):
            if r.shape != f.shape:
                raise ValueError(f"feature matching: shape {tuple(r.shape)} vs {tuple(f.shape)}")
            terms.append((r.detach() - f).abs().mean())
    return torch.stack(terms).mean()


def adv_losses(real_logits, fake_logits):
    """Least-squares GAN losses averaged over branches: ``(adv_g, adv_d)``.

    ``adv_d`` sees ``fake`` as given; detach it before calling when training
    the discriminator.
    """
    _check_structure(real_logits, fake_logits, "adversarial")
    g, d = [], []
    for r, f in zip(real_logits, fake_logits):
        g.append(torch.mean((f - 1.0) ** 2))
        d.append(torch.mean((r - 1.0) ** 2) + torch.mean(f**2))
    return torch.stack(g).mean(), torch.stack(d).mean()


def _isnan(v) -> bool:
    return bool(torch.isnan(torch.as_tensor(v)).any())


def total_generator_loss(mel, vq, fm, adv_g, w: LossWeights, adv_d=None) -> LossBreakdown:
    """Weighted sum of the four generator terms.

    Terms whose weight is zero are left out of the sum entirely, so they pass
    no gradient back even when their raw value is non-zero.
    """
    for name, v in (("mel", mel), ("vq", vq), ("fm", fm), ("adv_g", adv_g)):
        if _isnan(v):
            raise TrainingDivergenceError(f"{name} loss is NaN")
    total = mel
    for weight, part in ((w.vq, vq), (w.fm, fm), (w.adv, adv_g)):
        if weight != 0:
            total = total + weight * part
    return LossBreakdown(mel=mel, vq=vq, fm=fm, adv_g=adv_g, total=total, adv_d=adv_d)
