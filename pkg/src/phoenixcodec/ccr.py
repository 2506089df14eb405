"""Cyclical calibration and refinement: the stage scheduler that gates loss weights.

Stages run PRETRAIN -> JOINT -> (CALIBRATION -> REFINEMENT)* and stop. Each
stage lasts until the validation metric stops improving by a relative margin
for ``patience`` consecutive validation rounds. PRETRAIN and CALIBRATION
train on reconstruction and quantization only; JOINT and REFINEMENT add the
feature-matching and adversarial terms back.

State is immutable: :func:`observe_validation` returns a new
:class:`CcrState`, so replaying a validation sequence reproduces the same
history exactly.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, replace

from .errors import TrainingDivergenceError
from .losses import LossWeights


class CcrStage(str, enum.Enum):
    PRETRAIN = "PRETRAIN"
    JOINT = "JOINT"
    CALIBRATION = "CALIBRATION"
    REFINEMENT = "REFINEMENT"

    @property
    def adversarial(self) -> bool:
        return self in (CcrStage.JOINT, CcrStage.REFINEMENT)


STOP = "STOP"

_NEXT = {
    CcrStage.PRETRAIN: CcrStage.JOINT,
    CcrStage.JOINT: CcrStage.CALIBRATION,
    CcrStage.CALIBRATION: CcrStage.REFINEMENT,
    CcrStage.REFINEMENT: CcrStage.CALIBRATION,
}


@dataclass(frozen=True)
class CcrPolicy:
    patience: int = 5
    min_rel_improve: float = 0.005
    val_metric: str = "mel_loss"
    max_cycles: int = 4

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 < self.min_rel_improve < 1:
            raise ValueError("min_rel_improve must be in (0, 1)")
        if self.max_cycles < 1:
            raise ValueError("max_cycles must be >= 1")


@dataclass(frozen=True)
class StagePlan:
    """Where training starts and which stage (if any) ends it early.

    ``terminal`` is ``(stage, cycle)``; reaching the end of that stage stops
    the run instead of advancing.
    """

    start: CcrStage = CcrStage.PRETRAIN
    terminal: tuple | None = None
    cycling: bool = True

    def ends_after(self, stage: CcrStage, cycle: int) -> bool:
        if self.terminal is not None:
            t_stage, t_cycle = self.terminal
            if stage == t_stage and cycle == t_cycle:
                return True
        return not self.cycling and stage == CcrStage.JOINT


@dataclass(frozen=True)
class Transition:
    step: int
    src: str
    dst: str
    metric: float
    cycle: int


@dataclass(frozen=True)
class CcrState:
    stage: CcrStage = CcrStage.PRETRAIN
    cycle_index: int = 0
    best_val: float = math.inf
    epochs_since_improve: int = 0
    best_refinement_val: float = math.inf
    refinement_bests: tuple = ()
    stopped: bool = False
    history: tuple = ()
    last_step: int = -1

    @classmethod
    def initial(cls, plan: StagePlan = StagePlan()) -> "CcrState":
        cycle = 1 if plan.start in (CcrStage.CALIBRATION, CcrStage.REFINEMENT) else 0
        return cls(stage=plan.start, cycle_index=cycle)

    def to_json(self) -> str:
        d = asdict(self)
        d["stage"] = self.stage.value
        d["history"] = [asdict(t) for t in self.history]
        d["refinement_bests"] = list(self.refinement_bests)
        return json.dumps(d, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "CcrState":
        d = json.loads(text)
        d["stage"] = CcrStage(d["stage"])
        d["history"] = tuple(Transition(**t) for t in d["history"])
        d["refinement_bests"] = tuple(d["refinement_bests"])
        return cls(**d)


def loss_weights(state: CcrState, configured: LossWeights) -> LossWeights:
    """Effective weights: adversarial terms zeroed outside JOINT/REFINEMENT."""
    if state.stage.adversarial:
        return configured
    return LossWeights(vq=configured.vq, fm=0.0, adv=0.0)


def _cycle_stalled(bests, policy: CcrPolicy) -> bool:
    if len(bests) < 2:
        return False
    return not bests[-1] < min(bests[:-1]) * (1 - policy.min_rel_improve)


def should_stop(state: CcrState, policy: CcrPolicy) -> bool:
    """True once cycling has stalled, the cycle cap is exceeded, or a plan ended the run."""
    return state.stopped or state.cycle_index > policy.max_cycles or _cycle_stalled(state.refinement_bests, policy)


def observe_validation(
    state: CcrState,
    policy: CcrPolicy,
    val: float,
    step: int | None = None,
    plan: StagePlan = StagePlan(),
) -> CcrState:
    """Fold one validation result into the scheduler state."""
    if val is None or math.isnan(val):
        raise TrainingDivergenceError("validation metric is NaN")
    step = state.last_step + 1 if step is None else step
    if step < state.last_step:
        raise ValueError(f"validation step {step} precedes {state.last_step}")
    if state.stopped:
        return replace(state, last_step=step)

    if val < state.best_val * (1 - policy.min_rel_improve):
        return replace(state, best_val=val, epochs_since_improve=0, last_step=step)

    waited = state.epochs_since_improve + 1
    if waited < policy.patience:
        return replace(state, epochs_since_improve=waited, last_step=step)

    # Stage converged.
    src = state.stage
    bests = state.refinement_bests
    best_refinement = state.best_refinement_val
    if src == CcrStage.REFINEMENT:
        bests = bests + (state.best_val,)
        best_refinement = min(best_refinement, state.best_val)

    dst = _NEXT[src]
    cycle = state.cycle_index
    if src in (CcrStage.JOINT, CcrStage.REFINEMENT):
        cycle += 1

    stop = plan.ends_after(src, state.cycle_index)
    if src == CcrStage.REFINEMENT and (_cycle_stalled(bests, policy) or cycle > policy.max_cycles):
        stop = True

    if stop:
        record = Transition(step, src.value, STOP, float(val), state.cycle_index)
        return replace(
            state,
            epochs_since_improve=0,
            refinement_bests=bests,
            best_refinement_val=best_refinement,
            stopped=True,
            history=state.history + (record,),
            last_step=step,
        )
    record = Transition(step, src.value, dst.value, float(val), cycle)
    return replace(
        state,
        stage=dst,
        cycle_index=cycle,
        best_val=math.inf,
        epochs_since_improve=0,
        refinement_bests=bests,
        best_refinement_val=best_refinement,
        history=state.history + (record,),
        last_step=step,
    )


_PRESETS = {
    "full": StagePlan(),
    "joint-opt": StagePlan(start=CcrStage.JOINT, cycling=False),
    "ccr-s1": StagePlan(terminal=(CcrStage.PRETRAIN, 0)),
    "ccr-s2": StagePlan(terminal=(CcrStage.JOINT, 0)),
    "ccr-s3-c": StagePlan(terminal=(CcrStage.CALIBRATION, 1)),
    "ccr-s3-r": StagePlan(terminal=(CcrStage.REFINEMENT, 1)),
}


def ablation_preset(name: str, policy: CcrPolicy | None = None) -> tuple[CcrPolicy, StagePlan]:
    """Policy and stage plan for one of the training-strategy ablations."""
    try:
        plan = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown CCR preset {name!r}; choose from {sorted(_PRESETS)}") from None
    return (policy or CcrPolicy()), plan


def trajectory(state: CcrState) -> list[str]:
    """Sequence of stages visited, starting with the initial one."""
    if not state.history:
        return [state.stage.value]
    seq = [state.history[0].src]
    seq += [t.dst for t in state.history if t.dst != STOP]
    return seq
