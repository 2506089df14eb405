"""Command-line entry points: train, finetune-nift, encode, decode, audit, eval.

Exit codes: 0 success, 1 usage or input error, 2 budget or latency gate
failure, 3 corrupt bitstream.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import bitstream
from .budget import audit_model, codec_layers
from .config import load_mapping
from .corpus import load_clips, read_manifest
from .dsp import Waveform, read_wav, write_wav
from .errors import CorruptStreamError
from .metrics import evaluate
from .model import load_codec
from .streaming import latency_report, stream_decode, stream_encode
from .train import RunConfig, Trainer, resolve_out_dir

EXIT_OK, EXIT_USAGE, EXIT_GATE, EXIT_CORRUPT = 0, 1, 2, 3
RATES = {"1k": 0, "6k": 1}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _chunks(text: str) -> list[int]:
    try:
        sizes = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad chunk schedule {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError("chunk sizes must be positive integers")
    return sizes


def _run_config(path, seed=None) -> RunConfig:
    cfg = RunConfig.from_dict(load_mapping(path)) if path else RunConfig()
    return replace(cfg, seed=seed) if seed is not None else cfg


def cmd_train(args) -> int:
    cfg = _run_config(args.config, args.seed)
    trainer = Trainer(cfg, args.out)
    state = trainer.run(args.max_steps)
    print(f"stopped at step {trainer.step} in {state.stage.value}; checkpoint {trainer.out_dir / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_finetune(args) -> int:
    cfg = _run_config(args.config, args.seed)
    if not Path(args.init).exists():
        print(f"error: --init checkpoint {args.init} not found; run `train` first", file=sys.stderr)
        return EXIT_USAGE
    trainer = Trainer(cfg, args.out, nift=True, init=args.init)
    trainer.run(args.max_steps)
    print(f"fine-tuned to step {trainer.step}; checkpoint {trainer.out_dir / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_encode(args) -> int:
    model, _ = load_codec(args.model)
    mode = RATES[args.rate]
    depth = bitstream.depth_for_mode(mode)
    wave = read_wav(args.input, resample=args.resample)
    x = torch.from_numpy(wave.samples).to(model.decoder.output_conv.weight.dtype)
    if args.stream:
        codes = stream_encode(model, wave.samples, depth, args.chunks)
    else:
        codes = model.compress(x, depth)
    data = bitstream.pack(codes.numpy(), mode, model.cfg.framing.sample_rate)
    Path(args.output).write_bytes(data)
    rate = bitstream.measured_bitrate(data)
    print(f"{codes.shape[0]} frames, {len(data)} bytes, {rate:.1f} bps payload")
    return EXIT_OK


def cmd_decode(args) -> int:
    model, _ = load_codec(args.model)
    data = Path(args.input).read_bytes()
    try:
        codes, header = bitstream.unpack(data)
    except CorruptStreamError as e:
        print(f"error: corrupt stream {args.input}: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    if header.sample_rate != model.cfg.framing.sample_rate:
        print(f"error: stream is {header.sample_rate} Hz, model is {model.cfg.framing.sample_rate} Hz", file=sys.stderr)
        return EXIT_CORRUPT
    if args.stream:
        y = stream_decode(model, codes, header.depth, args.chunks)
    else:
        y = model.decompress(torch.from_numpy(codes))
    write_wav(args.output, Waveform(np.clip(y.double().numpy(), -1.0, 1.0), header.sample_rate))
    print(f"{header.frame_count} frames -> {y.shape[-1]} samples")
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _run_config(args.config).codec
    report = audit_model(cfg)
    latency = latency_report(cfg.framing, codec_layers(cfg))
    if args.json:
        print(json.dumps({**report.summary(), "latency_ms": latency.ms, "latency_ok": latency.passed}, indent=2))
    else:
        print(report.table())
        flag = f" (lookahead in {', '.join(latency.flagged)})" if latency.flagged else ""
        print(f"{'PASS' if latency.passed else 'FAIL'}: algorithmic latency {latency.ms:.1f} ms{flag}")
    return EXIT_OK if report.passed and latency.passed else EXIT_GATE


def cmd_eval(args) -> int:
    model, _ = load_codec(args.model)
    entries = read_manifest(args.manifest, args.split)
    clips = load_clips(entries, args.resample)
    conditions = tuple(args.conditions.split(","))
    modes = tuple(RATES[r] for r in args.rates.split(","))
    out = resolve_out_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = evaluate(
        model, clips, [e.clip_id for e in entries], conditions, modes, args.seed,
        wav_dir=out / "wavs" if args.wavs else None,
    )
    (out / "report.json").write_text(report.to_json() + "\n")
    print(report.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phoenixcodec", description="Low-resource neural speech codec.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a base codec with the CCR schedule")
    t.add_argument("--config")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", help="run directory (default: config out_dir)")
    t.add_argument("--max-steps", type=int)
    t.set_defaults(func=cmd_train)

    f = sub.add_parser("finetune-nift", help="noise-invariant fine-tuning from a base checkpoint")
    f.add_argument("--config")
    f.add_argument("--init", required=True)
    f.add_argument("--seed", type=int)
    f.add_argument("--out")
    f.add_argument("--max-steps", type=int)
    f.set_defaults(func=cmd_finetune)

    for name, func, helptext in (("encode", cmd_encode, "WAV -> bitstream"), ("decode", cmd_decode, "bitstream -> WAV")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--model", required=True)
        if name == "encode":
            c.add_argument("--rate", choices=sorted(RATES), required=True)
            c.add_argument("--resample", action="store_true", help="resample non-24 kHz input instead of rejecting it")
        c.add_argument("--stream", action="store_true", help="run the chunked streaming path")
        c.add_argument("--chunks", type=_chunks, default=[288], help="comma-separated chunk sizes, cycled")
        c.add_argument("input")
        c.add_argument("output")
        c.set_defaults(func=func)

    a = sub.add_parser("audit", help="compute budget and latency gates")
    a.add_argument("--config")
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_audit)

    e = sub.add_parser("eval", help="objective metrics per condition and rate")
    e.add_argument("--model", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", default=None)
    e.add_argument("--conditions", default="clean,noisy,reverb")
    e.add_argument("--rates", default="1k,6k")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--resample", action="store_true")
    e.add_argument("--wavs", action="store_true", help="write per-clip WAV triples for external tools")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CorruptStreamError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except (ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
