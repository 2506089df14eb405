import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from phoenixcodec.errors import IndexRangeError
from phoenixcodec.quantizer import ResidualVQ, RvqConfig, bitrate, codebook_health


def rvq(dim=16, size=4096, depth=6, seed=0, scale=0.1):
    torch.manual_seed(seed)
    q = ResidualVQ(RvqConfig(latent_dim=dim, codebook_size=size, max_depth=depth)).double().eval()
    q.codebooks.mul_(scale / 0.1)
    return q


def brute_nearest(x, entries):
    return np.array([int(np.argmin([np.sum((v - e) ** 2) for e in entries])) for v in x])


def test_bitrate_law():
    assert bitrate(1) == 1000.0
    assert bitrate(6) == 6000.0
    assert RvqConfig().bits_per_frame(6) == 72


def test_toy_nearest():
    q = ResidualVQ(RvqConfig(latent_dim=2, codebook_size=2, max_depth=1)).double().eval()
    q.codebooks[0] = torch.tensor([[0.0, 0.0], [1.0, 1.0]], dtype=torch.float64)
    codes, _, _ = q(torch.tensor([[0.9, 0.8]], dtype=torch.float64), 1)
    assert codes.tolist() == [[1]]


def test_exact_entry_gives_zero_loss():
    q = rvq(dim=4, size=32, depth=1)
    x = q.codebooks[0, 7:8].clone()
    codes, zq, loss = q(x, 1)
    assert codes.item() == 7
    assert torch.equal(zq, x)
    assert loss.item() == 0.0


def test_nearest_matches_brute_force(rng):
    q = rvq(dim=8, size=256, depth=1)
    x = torch.from_numpy(rng.standard_normal((64, 8)) * 0.1)
    got = ResidualVQ.nearest(x, q.codebooks[0]).numpy()
    assert np.array_equal(got, brute_nearest(x.numpy(), q.codebooks[0].numpy()))


def test_quantize_dequantize_round_trip(rng):
    q = rvq()
    x = torch.from_numpy(rng.standard_normal((3, 10, 16)) * 0.2)
    codes, zq, _ = q(x, 6)
    assert torch.equal(q.dequantize(codes), zq)


def test_zero_codebooks_dequantize_to_zero():
    q = rvq(dim=4, size=16)
    q.codebooks.zero_()
    assert torch.all(q.dequantize(torch.tensor([[1, 2, 3, 4, 5, 6]])) == 0)


def test_dequantize_out_of_range():
    q = rvq(dim=4, size=16)
    with pytest.raises(IndexRangeError):
        q.dequantize(torch.tensor([[16]]))


def test_depth_out_of_range():
    q = rvq(dim=4, size=16)
    with pytest.raises(ValueError):
        q(torch.zeros(2, 4, dtype=torch.float64), 0)
    with pytest.raises(ValueError):
        q(torch.zeros(2, 4, dtype=torch.float64), 7)


def test_truncated_codes_dequantize_like_depth_one(rng):
    q = rvq()
    x = torch.from_numpy(rng.standard_normal((20, 16)) * 0.2)
    codes6, _, _ = q(x, 6)
    _, zq1, _ = q(x, 1)
    assert torch.equal(q.dequantize(codes6[:, :1]), zq1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 6))
def test_prefix_consistency(seed, k):
    q = rvq(dim=8, size=64)
    x = torch.from_numpy(np.random.default_rng(seed).standard_normal((16, 8)) * 0.2)
    full, _, _ = q(x, 6)
    part, _, _ = q(x, k)
    assert torch.equal(full[:, :k], part)


def test_vq_loss_and_straight_through(rng):
    q = rvq(dim=4, size=32)
    x = torch.from_numpy(rng.standard_normal((5, 4))).requires_grad_()
    codes, zq, loss = q(x, 3)
    expected = 0.25 * torch.mean((x.detach() - q.dequantize(codes)) ** 2)
    assert torch.allclose(loss, expected)
    zq.sum().backward()
    assert torch.equal(x.grad, torch.ones_like(x))


def test_ema_update_moves_entry_toward_data():
    torch.manual_seed(0)
    q = ResidualVQ(RvqConfig(latent_dim=2, codebook_size=2, max_depth=1, ema_decay=0.5)).double()
    q.codebooks[0] = torch.tensor([[0.0, 0.0], [1.0, 1.0]], dtype=torch.float64)
    q.ema_counts[0] = torch.tensor([1.0, 1.0], dtype=torch.float64)
    q.ema_sums[0] = q.codebooks[0].clone()
    q.train()
    q(torch.tensor([[0.9, 0.9]], dtype=torch.float64), 1)
    # count 0.5*1 + 0.5*1 = 1, sum 0.5*[1,1] + 0.5*[0.9,0.9] = [0.95, 0.95]
    assert torch.allclose(q.codebooks[0, 1], torch.tensor([0.95, 0.95], dtype=torch.float64), atol=1e-4)


def test_dead_codes_reseeded_finite(rng):
    q = rvq(dim=4, size=64, depth=2).train()
    x = torch.from_numpy(rng.standard_normal((50, 4)))
    for _ in range(3):
        q(x, 2)
    assert torch.isfinite(q.codebooks).all()
    assert torch.isfinite(q.ema_counts).all()
    # every entry has been seeded or used, none is left below the threshold
    assert codebook_health(q).dead[0] == 0


def test_codebook_health_examples():
    assert codebook_health(np.ones(4096)).perplexity[0] == pytest.approx(4096)
    one = np.zeros(4096)
    one[5] = 3.0
    assert codebook_health(one).perplexity[0] == pytest.approx(1.0)
    half = np.zeros(4096)
    half[:2] = 0.5
    h = codebook_health(half)
    assert h.perplexity[0] == pytest.approx(2.0)
    assert h.dead[0] == 4094
