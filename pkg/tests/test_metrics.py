import numpy as np
import pytest
import torch

from phoenixcodec.losses import mel_loss
from phoenixcodec.metrics import EvalReport, ClipResult, assign_conditions, evaluate, logmel_distance, si_snr


def test_si_snr_examples(rng):
    ref = rng.standard_normal(100)
    assert si_snr(ref, 2 * ref) == 60.0
    assert si_snr(np.array([1.0, 0.0]), np.array([1.0, 1.0])) == pytest.approx(0.0)
    assert si_snr(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == -60.0
    with pytest.raises(ValueError):
        si_snr(ref, ref[:-1])


def test_logmel_distance_is_mel_loss(rng):
    a, b = torch.from_numpy(rng.standard_normal(3000)), torch.from_numpy(rng.standard_normal(3000))
    assert logmel_distance(a, a) == 0.0
    assert logmel_distance(a, b) == logmel_distance(b, a) == float(mel_loss(a, b))


def test_assign_conditions_covers_once():
    got = assign_conditions(7)
    assert len(got) == 7 and got[:3] == ["clean", "noisy", "reverb"]


def test_report_aggregates_are_means():
    r = EvalReport([ClipResult("a", "clean", 0, 1.0, 10.0), ClipResult("b", "clean", 0, 3.0, 20.0),
                    ClipResult("c", "noisy", 1, 5.0, 0.0)])
    agg = r.aggregate()
    assert agg[("clean", 0)] == {"n": 2, "logmel_distance": 2.0, "si_snr": 15.0}
    assert agg[("noisy", 1)]["n"] == 1
    assert r.mean("logmel_distance", "clean") == 2.0
    assert "clean" in r.table() and '"aggregate"' in r.to_json()


def test_evaluate_both_columns(codec32, rng, tmp_path):
    clips = [rng.standard_normal(4000) * 0.1 for _ in range(4)]
    r = evaluate(codec32, clips, conditions=("clean", "noisy"), wav_dir=tmp_path)
    assert {k for k in r.aggregate()} == {("clean", 0), ("clean", 1), ("noisy", 0), ("noisy", 1)}
    assert len(r.clips) == 8
    assert len(list(tmp_path.glob("*_out.wav"))) == 8
