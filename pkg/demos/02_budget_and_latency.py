"""Show what the audit counts and how the latency figure is derived.

    python3 demos/02_budget_and_latency.py
"""

from dataclasses import replace

from phoenixcodec.budget import LayerSpec, audit_model, codec_layers, reconcile
from phoenixcodec.decoder import DecoderConfig
from phoenixcodec.model import CodecConfig, PhoenixCodec
from phoenixcodec.streaming import latency_report

cfg = CodecConfig()
report = audit_model(cfg)
print(report.table())

# Every tensor in a fresh checkpoint should map to an audited layer.
print("\nreconcile against the state dict:", reconcile(report, PhoenixCodec(cfg).state_dict()))

print("\nper module:")
for name, m in report.by_module().items():
    print(f"  {name:<10} {m['params']:>9,} params {m['mflops']:>8.2f} MFLOPs/s")

# Latency is window plus any layer lookahead. The shipped model has none.
lat = latency_report(cfg.framing, codec_layers(cfg))
print(f"\nalgorithmic latency: {lat.samples} samples = {lat.ms:.1f} ms")

# A layer that peeks 96 samples ahead pushes it past the bound.
peek = LayerSpec("decoder.peek", "elementwise", "decoder", elements=1, lookahead=96)
bad = latency_report(cfg.framing, codec_layers(cfg) + [peek])
print(f"with a 96-sample lookahead: {bad.ms:.1f} ms, passes: {bad.passed}, flagged: {bad.flagged}")

# Doubling decoder width shows how quickly the compute gate closes.
wide = replace(cfg, decoder=DecoderConfig(stage_channels=tuple(2 * c for c in cfg.decoder.stage_channels)))
r = audit_model(wide)
print(f"double-width decoder: {r.total_mflops_per_second:.1f} MFLOPs/s, {r.total_params:,} params, passes: {r.passed}")
