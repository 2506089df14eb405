import math
import re

import pytest
from hypothesis import given, settings, strategies as st

from phoenixcodec.ccr import (
    STOP,
    CcrPolicy,
    CcrStage,
    CcrState,
    StagePlan,
    ablation_preset,
    loss_weights,
    observe_validation,
    should_stop,
    trajectory,
)
from phoenixcodec.errors import TrainingDivergenceError
from phoenixcodec.losses import LossWeights

P, J, C, R = CcrStage.PRETRAIN, CcrStage.JOINT, CcrStage.CALIBRATION, CcrStage.REFINEMENT


def replay(vals, policy=CcrPolicy(), plan=StagePlan(), state=None):
    state = state or CcrState.initial(plan)
    for i, v in enumerate(vals):
        state = observe_validation(state, policy, v, i, plan)
    return state


def test_loss_weights_gating():
    w = LossWeights(1, 2, 1)
    assert loss_weights(CcrState(stage=C), w) == LossWeights(1, 0, 0)
    assert loss_weights(CcrState(stage=R), w) == w
    assert loss_weights(CcrState(stage=J), w) == w
    assert loss_weights(CcrState(stage=P), LossWeights(0.5, 9, 9)) == LossWeights(0.5, 0, 0)


def test_patience_exhaustion_moves_to_joint():
    # 0.998 and 0.997 are under the 0.5% margin against best 1.0.
    s = CcrState(stage=P, best_val=1.0)
    pol = CcrPolicy(patience=2)
    s = observe_validation(s, pol, 0.998, 1)
    assert s.stage == P and s.epochs_since_improve == 1
    s = observe_validation(s, pol, 0.997, 2)
    assert s.stage == J
    assert s.history[-1].src == "PRETRAIN" and s.history[-1].dst == "JOINT"
    assert s.history[-1].metric == 0.997 and s.history[-1].step == 2


def test_clear_improvement_resets():
    for stage in CcrStage:
        s = CcrState(stage=stage, best_val=2.0, epochs_since_improve=3, cycle_index=1)
        s2 = observe_validation(s, CcrPolicy(), 1.8, 0)
        assert s2.stage == stage and s2.epochs_since_improve == 0 and s2.best_val == 1.8


def test_margin_boundary_is_not_improvement():
    s = CcrState(stage=P, best_val=1.0)
    s = observe_validation(s, CcrPolicy(patience=3), 0.995, 0)
    assert s.epochs_since_improve == 1 and s.best_val == 1.0


def test_refinement_exhaustion_increments_cycle():
    s = CcrState(stage=R, cycle_index=1, best_val=1.0, epochs_since_improve=4)
    s = observe_validation(s, CcrPolicy(patience=5), 1.0, 10)
    assert s.stage == C and s.cycle_index == 2
    assert s.refinement_bests == (1.0,)


def test_nan_is_divergence():
    with pytest.raises(TrainingDivergenceError):
        observe_validation(CcrState(), CcrPolicy(), math.nan)


def test_scripted_full_history():
    pol = CcrPolicy(patience=2, max_cycles=4)
    vals = [10, 9, 9, 9,  # PRETRAIN: best 9, two stalls -> JOINT
            8, 8, 8,      # JOINT -> CALIBRATION (cycle 1)
            7, 7, 7,      # CALIBRATION -> REFINEMENT
            6, 6, 6,      # REFINEMENT best 6 -> CALIBRATION (cycle 2)
            5.5, 5.5, 5.5,
            5.0, 5.0, 5.0,  # REFINEMENT best 5.0 improves on 6 -> CALIBRATION (cycle 3)
            4.9, 4.9, 4.9,
            4.99, 4.99, 4.99]  # REFINEMENT best 4.99 fails to beat 5.0 by 0.5% -> STOP
    s = replay(vals, pol)
    got = [(t.step, t.src, t.dst, t.cycle) for t in s.history]
    assert got == [
        (3, "PRETRAIN", "JOINT", 0),
        (6, "JOINT", "CALIBRATION", 1),
        (9, "CALIBRATION", "REFINEMENT", 1),
        (12, "REFINEMENT", "CALIBRATION", 2),
        (15, "CALIBRATION", "REFINEMENT", 2),
        (18, "REFINEMENT", "CALIBRATION", 3),
        (21, "CALIBRATION", "REFINEMENT", 3),
        (24, "REFINEMENT", STOP, 3),
    ]
    assert s.stopped and should_stop(s, pol)
    assert s.refinement_bests == (6, 5.0, 4.99)


def test_should_stop_examples():
    pol = CcrPolicy()
    assert should_stop(CcrState(refinement_bests=(1.0, 0.999)), pol)
    assert not should_stop(CcrState(refinement_bests=(1.0, 0.9)), pol)
    assert should_stop(CcrState(cycle_index=pol.max_cycles + 1), pol)
    assert not should_stop(CcrState(), pol)


def test_max_cycles_cap_stops():
    pol = CcrPolicy(patience=1, max_cycles=2)
    # Strictly improving refinements, so only the cap can stop the run.
    vals = [10, 10, 9, 9, 8, 8, 7, 7, 6, 6, 5, 5, 4, 4]
    s = replay(vals, pol)
    assert s.stopped
    assert s.history[-1].dst == STOP and s.history[-1].src == "REFINEMENT"
    assert s.cycle_index == 2


def test_presets():
    _, plan = ablation_preset("joint-opt")
    s = replay([1, 1, 1, 1, 1, 1, 1], CcrPolicy(patience=2), plan)
    assert trajectory(s) == ["JOINT"] and s.stopped
    _, plan = ablation_preset("ccr-s1")
    s = replay([1, 1, 1], CcrPolicy(patience=2), plan)
    assert trajectory(s) == ["PRETRAIN"] and s.stopped
    _, plan = ablation_preset("ccr-s2")
    s = replay([1, 1, 1, 1, 1, 1], CcrPolicy(patience=2), plan)
    assert trajectory(s) == ["PRETRAIN", "JOINT"] and s.stopped
    _, plan = ablation_preset("ccr-s3-c")
    s = replay([1] * 12, CcrPolicy(patience=2), plan)
    assert trajectory(s) == ["PRETRAIN", "JOINT", "CALIBRATION"] and s.stopped
    _, plan = ablation_preset("ccr-s3-r")
    assert plan.terminal == (R, 1)
    s = replay([1] * 12, CcrPolicy(patience=2), plan)
    assert trajectory(s) == ["PRETRAIN", "JOINT", "CALIBRATION", "REFINEMENT"] and s.stopped
    with pytest.raises(ValueError):
        ablation_preset("nope")


def test_policy_validation():
    with pytest.raises(ValueError):
        CcrPolicy(patience=0)
    with pytest.raises(ValueError):
        CcrPolicy(min_rel_improve=1.0)


TRAJ = re.compile(r"^PRETRAIN( JOINT( CALIBRATION REFINEMENT)*( CALIBRATION)?)?$")


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.1, 10.0, allow_nan=False), min_size=1, max_size=80), st.integers(1, 4))
def test_trajectory_regular_and_deterministic(vals, patience):
    pol = CcrPolicy(patience=patience)
    a, b = replay(vals, pol), replay(vals, pol)
    assert a == b
    assert TRAJ.match(" ".join(trajectory(a)))
    steps = [t.step for t in a.history]
    assert steps == sorted(steps)
    # the cycle counter grows by one exactly at transitions into CALIBRATION
    cycle = 0
    for t in a.history:
        cycle += t.dst == "CALIBRATION"
        assert t.cycle == cycle
    if a.stopped:
        # a run never stops in CALIBRATION under the default plan
        assert a.history[-1].src == "REFINEMENT"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 10.0, allow_nan=False), min_size=1, max_size=40))
def test_state_json_round_trip(vals):
    s = replay(vals, CcrPolicy(patience=2))
    assert CcrState.from_json(s.to_json()) == s
