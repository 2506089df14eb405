"""Static compute and parameter accounting for the inference path.

Convention: FLOPs = 2 x MACs for every multiply-accumulate layer, plus one
FLOP per element for activations and residual adds. Costs are per frame
(one hop of audio) and normalized to per-second at the frame rate.
Discriminators are training-only and are not audited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigError

MFLOPS_CEILING = 700.0
PARAM_CEILING = 1_600_000
CONVENTION = "FLOPs = 2 x MACs; activations and residual adds at 1 FLOP/element; per second at the frame rate"


@dataclass(frozen=True)
class LayerSpec:
    """Dimensions of one layer, everything counted per frame.

    ``t_out``/``t_in`` are output/input time steps per frame and ``f_out`` the
    output frequency extent for 2-D convs.
    """

    name: str
    kind: str
    module: str
    c_in: int | None = None
    c_out: int | None = None
    kernel: int | tuple | None = None
    t_out: int | None = None
    t_in: int | None = None
    f_out: int | None = None
    depth: int | None = None
    codebook_size: int | None = None
    dim: int | None = None
    elements: int | None = None
    bias: bool = True
    param_keys: tuple = ()
    lookahead: int = 0


@dataclass(frozen=True)
class LayerCost:
    name: str
    module: str
    macs_per_frame: int
    params: int
    extra_flops_per_frame: int = 0
    param_keys: tuple = ()
    lookahead: int = 0

    @property
    def flops_per_frame(self) -> int:
        return 2 * self.macs_per_frame + self.extra_flops_per_frame


def _need(spec: LayerSpec, *names):
    missing = [n for n in names if getattr(spec, n) is None]
    if missing:
        raise ConfigError(f"layer {spec.name!r} ({spec.kind}) is missing {missing}")
    return [getattr(spec, n) for n in names]


def layer_macs(spec: LayerSpec) -> LayerCost:
    """MACs per frame and parameter count for one layer."""
    extra = 0
    if spec.kind == "conv1d":
        c_in, c_out, k, t = _need(spec, "c_in", "c_out", "kernel", "t_out")
        macs = c_in * c_out * k * t
        params = c_in * c_out * k + (c_out if spec.bias else 0)
    elif spec.kind == "conv_transpose1d":
        c_in, c_out, k, t = _need(spec, "c_in", "c_out", "kernel", "t_in")
        macs = c_in * c_out * k * t
        params = c_in * c_out * k + (c_out if spec.bias else 0)
    elif spec.kind == "conv2d":
        c_in, c_out, k, f, t = _need(spec, "c_in", "c_out", "kernel", "f_out", "t_out")
        kf, kt = k
        macs = c_in * c_out * kf * kt * f * t
        params = c_in * c_out * kf * kt + (c_out if spec.bias else 0)
    elif spec.kind == "linear":
        c_in, c_out = _need(spec, "c_in", "c_out")
        t = spec.t_out or 1
        macs = c_in * c_out * t
        params = c_in * c_out + (c_out if spec.bias else 0)
    elif spec.kind == "vq_search":
        depth, size, dim = _need(spec, "depth", "codebook_size", "dim")
        macs = depth * size * dim
        params = depth * size * dim
        # residual update and running sum, per stage
        extra = 2 * depth * dim
    elif spec.kind == "stft":
        win, bins = _need(spec, "kernel", "c_out")
        macs = 2 * win * bins
        params = 0
        extra = win + 2 * bins  # windowing and input scaling
    elif spec.kind == "elementwise":
        (n,) = _need(spec, "elements")
        macs, params, extra = 0, 0, n
    else:
        raise ConfigError(f"unknown layer kind {spec.kind!r}")
    return LayerCost(spec.name, spec.module, macs, params, extra, spec.param_keys, spec.lookahead)


@dataclass
class BudgetReport:
    layers: list = field(default_factory=list)
    frame_rate: float = 24000 / 288
    mflops_ceiling: float = MFLOPS_CEILING
    param_ceiling: int = PARAM_CEILING
    state_keys: tuple = ()
    convention: str = CONVENTION

    @property
    def total_params(self) -> int:
        return sum(layer.params for layer in self.layers)

    @property
    def total_macs_per_frame(self) -> int:
        return sum(layer.macs_per_frame for layer in self.layers)

    @property
    def total_flops_per_frame(self) -> int:
        return sum(layer.flops_per_frame for layer in self.layers)

    @property
    def total_mflops_per_second(self) -> float:
        return self.total_flops_per_frame * self.frame_rate / 1e6

    @property
    def lookahead(self) -> int:
        return sum(layer.lookahead for layer in self.layers)

    @property
    def flops_ok(self) -> bool:
        return self.total_mflops_per_second <= self.mflops_ceiling

    @property
    def params_ok(self) -> bool:
        return self.total_params <= self.param_ceiling

    @property
    def passed(self) -> bool:
        return self.flops_ok and self.params_ok

    def by_module(self) -> dict:
        out: dict = {}
        for layer in self.layers:
            m = out.setdefault(layer.module, {"params": 0, "mflops": 0.0})
            m["params"] += layer.params
            m["mflops"] += layer.flops_per_frame * self.frame_rate / 1e6
        return out

    def summary(self) -> dict:
        return {
            "convention": self.convention,
            "frame_rate_hz": self.frame_rate,
            "total_params": self.total_params,
            "total_macs_per_frame": self.total_macs_per_frame,
            "total_mflops_per_second": self.total_mflops_per_second,
            "mflops_ceiling": self.mflops_ceiling,
            "param_ceiling": self.param_ceiling,
            "flops_ok": self.flops_ok,
            "params_ok": self.params_ok,
            "passed": self.passed,
            "modules": self.by_module(),
        }

    def table(self) -> str:
        rows = [f"# {self.convention}", f"{'layer':<36} {'module':<9} {'MACs/frame':>12} {'params':>10} {'MFLOPs':>9}"]
        for layer in self.layers:
            mflops = layer.flops_per_frame * self.frame_rate / 1e6
            rows.append(f"{layer.name:<36} {layer.module:<9} {layer.macs_per_frame:>12,} {layer.params:>10,} {mflops:>9.2f}")
        rows.append(
            f"{'TOTAL':<36} {'':<9} {self.total_macs_per_frame:>12,} {self.total_params:>10,} "
            f"{self.total_mflops_per_second:>9.2f}"
        )
        verdict = "PASS" if self.passed else "FAIL"
        rows.append(
            f"{verdict}: {self.total_mflops_per_second:.2f} / {self.mflops_ceiling:.0f} MFLOPs, "
            f"{self.total_params:,} / {self.param_ceiling:,} params"
        )
        return "\n".join(rows)


def _keys(prefix, bias=True):
    return (f"{prefix}.weight", f"{prefix}.bias") if bias else (f"{prefix}.weight",)


def encoder_layers(cfg) -> list[LayerSpec]:
    spec = cfg.spectrogram
    bins = cfg.freq_bins()
    layers = [LayerSpec("encoder.stft", "stft", "encoder", kernel=spec.win, c_out=spec.n_bins)]
    c_in = cfg.input_channels
    for i, st in enumerate(cfg.conv_stages):
        name = f"encoder.convs.{i}"
        layers.append(
            LayerSpec(name, "conv2d", "encoder", c_in, st.out_channels, (st.freq_kernel, st.time_kernel),
                      t_out=1, f_out=bins[i + 1], param_keys=_keys(name))
        )
        layers.append(LayerSpec(f"{name}.act", "elementwise", "encoder", elements=st.out_channels * bins[i + 1]))
        c_in = st.out_channels
    layers.append(LayerSpec("encoder.proj", "linear", "encoder", c_in * bins[-1], cfg.latent_dim,
                            param_keys=_keys("encoder.proj")))
    return layers


def quantizer_layers(cfg, depth: int | None = None) -> list[LayerSpec]:
    depth = cfg.max_depth if depth is None else depth
    # Searches run only to the requested depth, but every codebook ships.
    search = LayerSpec("quantizer.search", "vq_search", "quantizer", depth=depth,
                       codebook_size=cfg.codebook_size, dim=cfg.latent_dim, param_keys=("quantizer.codebooks",))
    return [search]


def decoder_layers(cfg) -> list[LayerSpec]:
    ch = cfg.stage_channels
    layers = [
        LayerSpec("decoder.input_conv", "conv1d", "decoder", cfg.latent_dim, ch[0], cfg.input_kernel, t_out=1,
                  param_keys=_keys("decoder.input_conv"))
    ]
    t = 1
    for i, f in enumerate(cfg.upsample_factors):
        layers.append(LayerSpec(f"decoder.upsamples.{i}.act", "elementwise", "decoder", elements=ch[i] * t))
        name = f"decoder.upsamples.{i}"
        layers.append(LayerSpec(name, "conv_transpose1d", "decoder", ch[i], ch[i + 1], 2 * f, t_in=t,
                                param_keys=_keys(name)))
        t *= f
        for j, _ in enumerate(cfg.res_dilations):
            unit = f"decoder.blocks.{i}.{j}"
            layers.append(LayerSpec(f"{unit}.act", "elementwise", "decoder", elements=ch[i + 1] * t))
            layers.append(LayerSpec(f"{unit}.conv", "conv1d", "decoder", ch[i + 1], ch[i + 1], cfg.res_kernel,
                                    t_out=t, param_keys=_keys(f"{unit}.conv")))
            layers.append(LayerSpec(f"{unit}.add", "elementwise", "decoder", elements=ch[i + 1] * t))
    layers.append(LayerSpec("decoder.output_conv.act", "elementwise", "decoder", elements=ch[-1] * t))
    layers.append(LayerSpec("decoder.output_conv", "conv1d", "decoder", ch[-1], 1, cfg.output_kernel, t_out=t,
                            param_keys=_keys("decoder.output_conv")))
    layers.append(LayerSpec("decoder.tanh", "elementwise", "decoder", elements=t))
    return layers


def codec_layers(cfg, depth: int | None = None) -> list[LayerSpec]:
    return encoder_layers(cfg.encoder) + quantizer_layers(cfg.rvq, depth) + decoder_layers(cfg.decoder)


def build_report(layers, frame_rate: float = 24000 / 288, **kw) -> BudgetReport:
    return BudgetReport([layer_macs(s) for s in layers], frame_rate=frame_rate, **kw)


def audit_model(cfg=None, depth: int | None = None, param_ceiling: int = PARAM_CEILING) -> BudgetReport:
    """Budget report for a full codec config (worst case: maximum depth)."""
    if cfg is None:
        return build_report([], param_ceiling=param_ceiling)
    return build_report(
        codec_layers(cfg, depth),
        frame_rate=cfg.framing.frame_rate,
        param_ceiling=param_ceiling,
        state_keys=("quantizer.ema_counts", "quantizer.ema_sums"),
    )


def reconcile(report: BudgetReport, state_dict) -> dict:
    """Compare a report against actual tensors.

    Returns ``{"unaccounted": [...], "missing": [...], "param_diff": int}``;
    all empty/zero means every checkpoint tensor is accounted for and the
    parameter totals agree.
    """
    accounted = {k for layer in report.layers for k in layer.param_keys}
    keys = set(state_dict)
    unaccounted = sorted(keys - accounted - set(report.state_keys))
    missing = sorted(accounted - keys)
    actual = sum(math.prod(state_dict[k].shape) for k in accounted & keys)
    return {"unaccounted": unaccounted, "missing": missing, "param_diff": actual - report.total_params}
