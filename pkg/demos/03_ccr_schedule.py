"""Drive the CCR scheduler with a made-up validation curve.

The scheduler never sees gradients, only one validation number per round.
It moves to the next stage once that number stops improving by 0.5% for
``patience`` rounds. The loss weights it hands out turn the adversarial
and feature-matching terms off in PRETRAIN and CALIBRATION.

    python3 demos/03_ccr_schedule.py
"""

from phoenixcodec.ccr import CcrPolicy, CcrState, loss_weights, observe_validation, should_stop, trajectory
from phoenixcodec.losses import LossWeights

policy = CcrPolicy(patience=2, max_cycles=3)
configured = LossWeights(vq=1.0, fm=2.0, adv=1.0)

# A curve that plateaus, drops when the stage changes, and finally flattens out.
curve = [10, 9, 9, 9, 8, 8, 8, 7, 7, 7, 6.5, 6.5, 6.5, 6.2, 6.2, 6.2, 6.19, 6.19, 6.19, 6.1, 6.1, 6.1, 6.18, 6.18, 6.18]
state = CcrState.initial()
for step, val in enumerate(curve):
    w = loss_weights(state, configured)
    state = observe_validation(state, policy, val, step)
    print(f"round {step:>2}  val {val:>5}  stage {state.stage.value:<11} cycle {state.cycle_index}  "
          f"weights used (vq {w.vq}, fm {w.fm}, adv {w.adv})")
    if should_stop(state, policy):
        print("scheduler says stop")
        break

print("\ntransitions:")
for t in state.history:
    print(f"  round {t.step}: {t.src} -> {t.dst} (metric {t.metric})")
print("stages visited:", " -> ".join(trajectory(state)))

# State is plain data, so it survives a JSON round trip and resumes exactly.
assert CcrState.from_json(state.to_json()) == state
