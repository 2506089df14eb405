"""Training and noise-invariant fine-tuning under the CCR scheduler.

One :class:`Trainer` step draws a batch, samples a quantizer depth, runs the
codec, and updates the generator with the stage's effective loss weights.
The discriminator is stepped only in adversarial stages, so it stays
bitwise frozen through PRETRAIN and CALIBRATION. Every ``val_every`` steps
the validation mel loss at ``val_depth`` is fed to the scheduler.

All randomness is derived from ``(seed, step)``, so a resumed run replays
the same batches as an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .ccr import CcrPolicy, CcrStage, CcrState, ablation_preset, loss_weights, observe_validation, should_stop
from .config import from_dict, load_mapping, to_dict
from .corpus import load_clips, make_synthetic_corpus, read_manifest
from .discriminators import Discriminator, MpdConfig, MrdConfig
from .errors import ConfigError, TrainingDivergenceError
from .losses import LossWeights, adv_losses, fm_loss, mel_loss, total_generator_loss
from .metrics import assign_conditions, degrade
from .model import CodecConfig, PhoenixCodec, load_codec, load_tensors, save_codec, save_tensors
from .nift import AugmentSpec, compose_batch, worker_rng

log = logging.getLogger(__name__)

OUT_ENV = "PHOENIXCODEC_OUT"
CHECKPOINT = "checkpoint.npz"
TRAIN_STATE = "checkpoint.train.npz"


@dataclass(frozen=True)
class OptimConfig:
    lr_g: float = 1e-3
    lr_d: float = 2e-4
    betas: tuple = (0.8, 0.99)
    reset_on_stage: bool = False


@dataclass(frozen=True)
class DataConfig:
    manifest: str | None = None  # None: synthesize a corpus into the run directory
    segment: int = 8640
    batch_size: int = 4
    resample: bool = False
    synthetic_clips: int = 10
    synthetic_duration: float = 3.0
    val_fraction: float = 0.2


@dataclass(frozen=True)
class RunConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    mpd: MpdConfig = field(default_factory=MpdConfig)
    mrd: MrdConfig = field(default_factory=MrdConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    mel_scale: float = 15.0
    ccr: CcrPolicy = field(default_factory=CcrPolicy)
    preset: str = "full"
    finetune_preset: str = "joint-opt"
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    nift: AugmentSpec = field(default_factory=AugmentSpec)
    depths: tuple = (1, 2, 3, 4, 5, 6)
    val_depth: int = 6
    val_every: int = 50
    max_steps: int = 20000
    checkpoint_every: int = 0
    seed: int = 0
    out_dir: str = "run"
    time_limit_s: float | None = None

    def __post_init__(self):
        ablation_preset(self.preset)
        ablation_preset(self.finetune_preset)
        if self.data.segment % self.codec.framing.hop_length:
            raise ConfigError("data.segment must be a multiple of the hop length")
        bad = [d for d in self.depths + (self.val_depth,) if not 1 <= d <= self.codec.rvq.max_depth]
        if bad:
            raise ConfigError(f"depths {bad} outside 1..{self.codec.rvq.max_depth}")
        if self.val_every < 1:
            raise ConfigError("val_every must be >= 1")

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        return from_dict(cls, data, "run")

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(load_mapping(path))


def resolve_out_dir(out_dir) -> Path:
    """Relative run directories live under ``$PHOENIXCODEC_OUT`` when it is set."""
    p = Path(out_dir)
    root = os.environ.get(OUT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


# --------------------------------------------------------------------------
# Optimizer (de)serialization into flat npz arrays
# --------------------------------------------------------------------------


def _flatten_optimizer(prefix: str, opt: torch.optim.Optimizer):
    sd = opt.state_dict()
    arrays = {}
    for idx, st in sd["state"].items():
        for k, v in st.items():
            arrays[f"{prefix}.state.{idx}.{k}"] = v if isinstance(v, torch.Tensor) else torch.tensor(v)
    return arrays, sd["param_groups"]


def _restore_optimizer(prefix: str, opt: torch.optim.Optimizer, arrays: dict, groups):
    state: dict = {}
    head = f"{prefix}.state."
    for key, v in arrays.items():
        if key.startswith(head):
            idx, name = key[len(head) :].split(".", 1)
            state.setdefault(int(idx), {})[name] = v.clone()
    opt.load_state_dict({"state": state, "param_groups": groups})


# --------------------------------------------------------------------------
# Trainer
# --------------------------------------------------------------------------


class Trainer:
    """Owns model, discriminator, optimizers, scheduler state and the metrics log."""

    def __init__(self, cfg: RunConfig, out_dir=None, nift: bool = False, init=None):
        self.cfg = cfg
        self.nift = nift
        self.out_dir = resolve_out_dir(out_dir if out_dir is not None else cfg.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        torch.manual_seed(cfg.seed)
        self.model = PhoenixCodec(cfg.codec)
        self.disc = Discriminator(cfg.mpd, cfg.mrd)
        if init is not None:
            self._load_init(init)
        self.policy, self.plan = ablation_preset(cfg.finetune_preset if nift else cfg.preset, cfg.ccr)
        self.state = CcrState.initial(self.plan)
        self.step = 0
        self.opt_g, self.opt_d = self._optimizers()
        self._load_data()
        self.log_path = self.out_dir / "metrics.jsonl"
        (self.out_dir / "config.json").write_text(json.dumps(to_dict(cfg), indent=2) + "\n")

    # -- setup ------------------------------------------------------------

    def _optimizers(self):
        o = self.cfg.optim
        return (
            torch.optim.Adam(self.model.parameters(), lr=o.lr_g, betas=o.betas),
            torch.optim.Adam(self.disc.parameters(), lr=o.lr_d, betas=o.betas),
        )

    def _load_init(self, path):
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"initial checkpoint {path} does not exist; train a base model first")
        model, _ = load_codec(path)
        if model.cfg != self.cfg.codec:
            raise ConfigError("initial checkpoint was trained with a different codec config")
        self.model.load_state_dict(model.state_dict())
        extra = path.with_name(path.name.replace(".npz", ".train.npz"))
        if extra.exists():
            tensors, _ = load_tensors(extra)
            self.disc.load_state_dict({k[5:]: v for k, v in tensors.items() if k.startswith("disc.")})

    def _load_data(self):
        d = self.cfg.data
        manifest = d.manifest
        if manifest is None:
            manifest = make_synthetic_corpus(
                self.out_dir / "corpus", d.synthetic_clips, d.synthetic_duration, self.cfg.seed, d.val_fraction
            )
        entries = read_manifest(manifest)
        train = [e for e in entries if e.split == "train"]
        val = [e for e in entries if e.split == "val"] or train
        if not train:
            raise ConfigError(f"{manifest}: no training clips")
        self.train_clips = load_clips(train, d.resample)
        self.val_clips = load_clips(val, d.resample)
        self.val_ids = [e.clip_id for e in val]
        # Fixed validation inputs: clean for base training, degraded round-robin for NIFT.
        conds = assign_conditions(len(self.val_clips)) if self.nift else ["clean"] * len(self.val_clips)
        self.val_pairs = [
            degrade(c, cond, worker_rng(self.cfg.seed, 3, i), self.cfg.nift)
            for i, (c, cond) in enumerate(zip(self.val_clips, conds))
        ]

    # -- one step ---------------------------------------------------------

    def sample_batch(self, step: int):
        rng = worker_rng(self.cfg.seed, 0, step)
        spec = self.cfg.nift if self.nift else AugmentSpec(mix_ratios=(1.0, 0.0, 0.0))
        pairs = compose_batch(self.train_clips, spec, rng, self.cfg.data.batch_size, self.cfg.data.segment)
        depth = int(rng.choice(self.cfg.depths))
        x = torch.from_numpy(np.stack([p.input for p in pairs])).float()
        y = torch.from_numpy(np.stack([p.target for p in pairs])).float()
        return x, y, depth, [p.condition for p in pairs]

    def train_step(self) -> dict:
        step = self.step
        torch.manual_seed(int(worker_rng(self.cfg.seed, 2, step).integers(2**62)))
        stage = self.state.stage
        w = loss_weights(self.state, self.cfg.weights)
        x, y, depth, conds = self.sample_batch(step)
        self.model.train()
        recon, _, vq = self.model(x, depth)
        recon = recon[..., : y.shape[-1]]
        mel = mel_loss(y, recon)

        adv_d = None
        zero = torch.zeros((), dtype=mel.dtype)
        fm = adv_g = zero
        if stage.adversarial:
            # Discriminator update on detached output.
            real = self.disc(y)
            fake = self.disc(recon.detach())
            _, adv_d = adv_losses(real.logits, fake.logits)
            if torch.isnan(adv_d):
                raise TrainingDivergenceError(f"discriminator loss is NaN at step {step}")
            self.opt_d.zero_grad(set_to_none=True)
            adv_d.backward()
            self.opt_d.step()
            # Generator terms against the updated discriminator.
            with torch.no_grad():
                real = self.disc(y)
            fake = self.disc(recon)
            fm = fm_loss(real, fake) if w.fm > 0 else zero
            adv_g, _ = adv_losses(real.logits, fake.logits)

        parts = total_generator_loss(self.cfg.mel_scale * mel, vq, fm, adv_g, w, adv_d)
        self.opt_g.zero_grad(set_to_none=True)
        parts.total.backward()
        self.opt_g.step()

        record = {
            "kind": "step",
            "step": step,
            "stage": stage.value,
            "cycle": self.state.cycle_index,
            "depth": depth,
            "mel_raw": float(mel.detach()),
            **parts.as_dict(),
            "lambda_vq": w.vq,
            "lambda_fm": w.fm,
            "lambda_adv": w.adv,
        }
        if self.nift:
            record["conditions"] = conds
        self.step += 1
        return record

    # -- validation -------------------------------------------------------

    @torch.no_grad()
    def validate(self, depth: int | None = None) -> float:
        depth = self.cfg.val_depth if depth is None else depth
        self.model.eval()
        vals = []
        for x, ref in self.val_pairs:
            est = self.model.reconstruct(torch.from_numpy(x).float(), depth)
            vals.append(float(mel_loss(torch.from_numpy(ref).float(), est)))
        self.model.train()
        return float(np.mean(vals))

    def observe(self, val: float) -> list:
        before = len(self.state.history)
        prev_stage = self.state.stage
        self.state = observe_validation(self.state, self.policy, val, self.step, self.plan)
        new = list(self.state.history[before:])
        if self.cfg.optim.reset_on_stage and self.state.stage != prev_stage:
            self.opt_g, self.opt_d = self._optimizers()
        return new

    # -- loop -------------------------------------------------------------

    def _write(self, fh, record):
        fh.write(json.dumps(record, allow_nan=True) + "\n")

    def run(self, max_steps: int | None = None, callback=None) -> CcrState:
        """Train until the scheduler stops, ``max_steps`` or the time limit.

        ``callback(trainer, record)`` is called after every step record.
        """
        max_steps = self.cfg.max_steps if max_steps is None else max_steps
        t0 = time.monotonic()
        with open(self.log_path, "a") as fh:
            if self.step == 0 and self.state.last_step < 0:
                val = self.validate()
                self._write(fh, {"kind": "val", "step": 0, "stage": self.state.stage.value, "val_mel_loss": val})
                self.observe(val)
            while self.step < max_steps and not should_stop(self.state, self.policy):
                if self.cfg.time_limit_s is not None and time.monotonic() - t0 > self.cfg.time_limit_s:
                    log.warning("time limit reached at step %d", self.step)
                    break
                record = self.train_step()
                self._write(fh, record)
                if callback is not None:
                    callback(self, record)
                if self.step % self.cfg.val_every == 0:
                    val = self.validate()
                    self._write(
                        fh, {"kind": "val", "step": self.step, "stage": self.state.stage.value, "val_mel_loss": val}
                    )
                    for t in self.observe(val):
                        self._write(fh, {"kind": "transition", **t.__dict__})
                        log.info("step %d: %s -> %s (val %.4f)", t.step, t.src, t.dst, t.metric)
                if self.cfg.checkpoint_every and self.step % self.cfg.checkpoint_every == 0:
                    self.save()
        self.save()
        return self.state

    # -- checkpoints ------------------------------------------------------

    def save(self, path=None) -> Path:
        path = Path(path) if path is not None else self.out_dir / CHECKPOINT
        save_codec(
            path,
            self.model,
            ccr_state=json.loads(self.state.to_json()),
            step=self.step,
            nift=self.nift,
            run_config=to_dict(self.cfg),
        )
        tensors = {f"disc.{k}": v for k, v in self.disc.state_dict().items()}
        g_arrays, g_groups = _flatten_optimizer("opt_g", self.opt_g)
        d_arrays, d_groups = _flatten_optimizer("opt_d", self.opt_d)
        tensors.update(g_arrays)
        tensors.update(d_arrays)
        tensors["torch_rng"] = torch.get_rng_state()
        save_tensors(
            path.with_name(path.name.replace(".npz", ".train.npz")),
            tensors,
            {"step": self.step, "opt_g_groups": g_groups, "opt_d_groups": d_groups},
        )
        with open(self.out_dir / "ccr_history.jsonl", "w") as fh:
            for t in self.state.history:
                fh.write(json.dumps(t.__dict__) + "\n")
        return path

    @classmethod
    def resume(cls, path, cfg: RunConfig | None = None) -> "Trainer":
        """Continue a run from :meth:`save` output; the run directory is the checkpoint's."""
        path = Path(path)
        model, meta = load_codec(path)
        cfg = cfg or RunConfig.from_dict(meta["run_config"])
        trainer = cls(cfg, out_dir=path.parent, nift=bool(meta.get("nift", False)))
        trainer.model.load_state_dict(model.state_dict())
        tensors, tmeta = load_tensors(path.with_name(path.name.replace(".npz", ".train.npz")))
        trainer.disc.load_state_dict({k[5:]: v for k, v in tensors.items() if k.startswith("disc.")})
        _restore_optimizer("opt_g", trainer.opt_g, tensors, tmeta["opt_g_groups"])
        _restore_optimizer("opt_d", trainer.opt_d, tensors, tmeta["opt_d_groups"])
        torch.set_rng_state(tensors["torch_rng"])
        trainer.state = CcrState.from_json(json.dumps(meta["ccr_state"]))
        trainer.step = int(meta["step"])
        return trainer


def train(cfg: RunConfig, out_dir=None, max_steps=None, callback=None) -> Trainer:
    trainer = Trainer(cfg, out_dir)
    trainer.run(max_steps, callback)
    return trainer


def finetune_nift(cfg: RunConfig, init, out_dir=None, max_steps=None, callback=None) -> Trainer:
    """Continue from a converged base checkpoint with degraded inputs and clean targets."""
    trainer = Trainer(cfg, out_dir, nift=True, init=init)
    trainer.run(max_steps, callback)
    return trainer


def read_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


__all__ = [
    "RunConfig",
    "OptimConfig",
    "DataConfig",
    "Trainer",
    "train",
    "finetune_nift",
    "read_log",
    "resolve_out_dir",
]
