"""Encode a clip at both rates, pack it into a bitstream, and decode it again.

The codec here is untrained, so the audio it produces is noise. What this
walk-through shows is the plumbing: exact bitrates through the container
format, and the streaming path agreeing with the offline one.

    python3 demos/01_codec_round_trip.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np
import torch

from phoenixcodec import bitstream
from phoenixcodec.corpus import synth_speech
from phoenixcodec.dsp import Waveform, write_wav
from phoenixcodec.model import CodecConfig, PhoenixCodec
from phoenixcodec.streaming import stream_decode, stream_encode

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(exist_ok=True)
torch.manual_seed(0)
codec = PhoenixCodec(CodecConfig()).eval()

# Two seconds of synthetic voiced speech at 24 kHz.
clip = synth_speech(2.0, np.random.default_rng(0)).astype(np.float32)
print(f"input: {clip.shape[0]} samples, {clip.shape[0] / 24000:.2f} s")

# One code frame per 288-sample hop. Depth 1 gives 1 kbps and depth 6 gives 6 kbps.
for mode, depth in ((0, 1), (1, 6)):
    codes = codec.compress(torch.from_numpy(clip), depth)
    data = bitstream.pack(codes.numpy(), mode)
    (out / f"clip_{bitstream.RATE_MODES[mode]}k.phx").write_bytes(data)
    print(
        f"depth {depth}: codes {tuple(codes.shape)}, {len(data)} bytes, "
        f"payload {bitstream.measured_bitrate(data):.1f} bps, with header {bitstream.measured_bitrate(data, True):.1f} bps"
    )

# The container is a 14-byte header followed by MSB-first 12-bit codes.
header = bitstream.read_header(data)
print(f"header: {header}")
decoded_codes, _ = bitstream.unpack(data)
y = codec.decompress(torch.from_numpy(decoded_codes))
print(f"decoded {y.shape[0]} samples (whole frames; trim to the input length if you kept it)")
write_wav(out / "clip_in.wav", Waveform(clip.astype(np.float64)))
write_wav(out / "clip_6k_out.wav", Waveform(np.clip(y[: clip.shape[0]].double().numpy(), -1, 1)))

# Streaming: feed awkward chunk sizes and get exactly the offline codes back.
streamed = stream_encode(codec, clip, 6, [100, 1, 577, 288])
print("streaming codes equal offline:", torch.equal(streamed, codec.compress(torch.from_numpy(clip), 6)))
y_stream = stream_decode(codec, streamed, 6, [1])
print(f"frame-by-frame decode max-abs difference: {float((y_stream - y).abs().max()):.2e}")
