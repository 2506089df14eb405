import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from phoenixcodec.encoder import EncoderConfig, FrequencyEncoder, encode
from phoenixcodec.errors import ConfigError
from phoenixcodec.model import CodecConfig, PhoenixCodec, load_codec, save_codec


@pytest.fixture(scope="module")
def enc():
    torch.manual_seed(3)
    return FrequencyEncoder().double().eval()


def test_default_bin_pyramid():
    assert EncoderConfig().freq_bins() == [361, 91, 23, 6, 1]


def test_shape_for_28800_samples(enc):
    z = encode(torch.zeros(28800, dtype=torch.float64), enc)
    assert z.vectors.shape == (100, 16)
    assert z.frame_rate == pytest.approx(24000 / 288)


def test_zero_input_deterministic(enc):
    a = encode(torch.zeros(2000, dtype=torch.float64), enc).vectors
    b = encode(torch.zeros(2000, dtype=torch.float64), enc).vectors
    assert torch.isfinite(a).all()
    assert torch.equal(a, b)


def test_final_hop_perturbation_leaves_earlier_frames(enc, rng):
    x = torch.from_numpy(rng.standard_normal(28800) * 0.1)
    y = x.clone()
    y[-288:] += torch.from_numpy(rng.standard_normal(288))
    za, zb = encode(x, enc).vectors, encode(y, enc).vectors
    assert torch.equal(za[:98], zb[:98])
    assert not torch.equal(za[99], zb[99])


def test_causality_exhaustive_per_sample(enc, rng):
    """Every sample j only reaches latent frames t with (t + 1) * hop > j."""
    n = 10 * 288
    x = torch.from_numpy(rng.standard_normal(n) * 0.1)
    base = encode(x, enc).vectors
    for j in range(0, n, 7):
        y = x.clone()
        y[j] += 0.5
        z = encode(y, enc).vectors
        first = j // 288
        assert torch.equal(z[:first], base[:first]), j


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5000))
def test_shape_law(n):
    torch.manual_seed(0)
    z = FrequencyEncoder()(torch.zeros(1, n))
    assert z.shape == (1, -(-n // 288), 16)


def test_streaming_matches_offline(enc, rng):
    x = torch.from_numpy(rng.standard_normal(12 * 288) * 0.2).unsqueeze(0)
    offline = enc(x)
    feats = enc.features(x)
    parts, caches = [], None
    for lo, hi in [(0, 1), (1, 4), (4, 5), (5, 12)]:
        z, caches = enc.stream(feats[..., lo:hi], caches)
        parts.append(z)
    # Different chunk widths may pick different conv kernels: agreement to rounding.
    assert torch.allclose(torch.cat(parts, dim=1), offline, rtol=0, atol=1e-12)


def test_config_errors():
    with pytest.raises(ConfigError):
        EncoderConfig(latent_dim=0)
    with pytest.raises(ConfigError):
        EncoderConfig(input_channels=1)
    with pytest.raises(ConfigError):
        EncoderConfig(n_fft=512)


def test_checkpoint_shape_mismatch_is_config_error(tmp_path):
    model = PhoenixCodec()
    save_codec(tmp_path / "m.npz", model)
    data = dict(np.load(tmp_path / "m.npz"))
    data["encoder.proj.weight"] = np.zeros((16, 3))
    np.savez(tmp_path / "bad.npz", **data)
    with pytest.raises(ConfigError):
        load_codec(tmp_path / "bad.npz")
