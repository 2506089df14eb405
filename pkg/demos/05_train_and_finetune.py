"""Train a small base model, fine-tune it on degraded inputs, and compare.

The defaults finish in a few minutes on one CPU core and show the trend
only. Pass a larger step count to go further:

    python3 demos/05_train_and_finetune.py [base_steps] [finetune_steps] [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
import torch

from phoenixcodec.ccr import CcrPolicy
from phoenixcodec.corpus import synth_speech
from phoenixcodec.metrics import evaluate
from phoenixcodec.model import load_codec
from phoenixcodec.train import OptimConfig, RunConfig, finetune_nift, read_log, train

torch.set_num_threads(1)
base_steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
ft_steps = int(sys.argv[2]) if len(sys.argv) > 2 else 150
out = Path(sys.argv[3] if len(sys.argv) > 3 else "demo_run")

# Base training: ten synthetic clips, validation every 25 steps feeding the scheduler.
base = train(RunConfig(val_every=25), out / "base", max_steps=base_steps)
log = read_log(base.log_path)
vals = [r["val_mel_loss"] for r in log if r["kind"] == "val"]
print(f"base: val mel {vals[0]:.3f} -> {vals[-1]:.3f} over {base.step} steps, stage now {base.state.stage.value}")
for r in log:
    if r["kind"] == "transition":
        print(f"  step {r['step']}: {r['src']} -> {r['dst']}")

# Fine-tuning stays in the reconstruction-only stage at a lower learning rate.
ft_cfg = RunConfig(val_every=25, finetune_preset="ccr-s1", ccr=CcrPolicy(patience=100),
                   optim=OptimConfig(lr_g=2e-4, lr_d=4e-5))
ft = finetune_nift(ft_cfg, base.out_dir / "checkpoint.npz", out / "nift", max_steps=ft_steps)

# Held-out clips the model never saw, scored against the clean reference.
held_out = [synth_speech(2.0, np.random.default_rng(100 + i)) for i in range(6)]
for name, path in (("base", base.out_dir / "checkpoint.npz"), ("nift", ft.out_dir / "checkpoint.npz")):
    model, _ = load_codec(path)
    report = evaluate(model, held_out, conditions=("clean", "noisy", "reverb"), rate_modes=(0, 1), seed=7)
    print(f"\n{name}:\n{report.table()}")
