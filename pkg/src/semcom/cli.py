"""Command-line interface.

Exit codes: 0 success, 2 usage error (unknown command / bad arguments),
3 bad configuration, 4 missing or incomplete weights, 1 any other error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import images
from .autoenc import IR, RGB
from .config import BadConfigError, RunConfig, load_config
from .report import EvalReport, aggregate, read_records, render_text, write_records, write_text
from .runner import (
    MissingWeightsError,
    evaluation_corpus,
    load_pipeline_weights,
    reconstruction_seed,
    run_end_to_end,
    save_pipeline_weights,
    train_stage1,
    train_stage2,
    training_corpus,
)
from .segmap import load_segmap
from .synthgen import save_corpus
from .wire import decode_frame, encode_frame

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_BAD_CONFIG = 3
EXIT_MISSING_WEIGHTS = 4

_EPILOG = """\
exit codes:
  0  success
  2  usage error (unknown command or bad arguments)
  3  bad configuration file or value
  4  missing or incomplete weights file
  1  any other error
"""


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_log(log: list[dict], path: Path) -> None:
    path.write_text("\n".join(json.dumps(entry) for entry in log) + "\n")


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    count = args.count if args.count is not None else cfg.eval_scenes
    base_seed = args.base_seed if args.base_seed is not None else cfg.eval_seed
    spec = cfg.scene_spec()
    from .synthgen import gen_corpus

    scenes = gen_corpus(spec, count, base_seed)
    save_corpus(scenes, args.out, spec=spec, base_seed=base_seed)
    print(f"wrote {count} scenes to {args.out}")
    return EXIT_OK


def cmd_train_ae(args) -> int:
    cfg = _resolve_config(args)
    corpus = training_corpus(cfg)
    aes, log = train_stage1(corpus, cfg)
    save_pipeline_weights(args.out, aes=aes)
    log_path = Path(args.log) if args.log else Path(str(args.out) + ".ae_log.jsonl")
    _write_log(log, log_path)
    print(f"stage-1 final loss {log[-1]['total']:.6f}; weights -> {args.out}")
    return EXIT_OK


def cmd_train_ldm(args) -> int:
    cfg = _resolve_config(args)
    aes, _, _ = load_pipeline_weights(args.weights)
    corpus = training_corpus(cfg)
    den, sched, log = train_stage2(corpus, aes, cfg)
    out = args.out or args.weights
    save_pipeline_weights(out, aes=aes, den=den, sched=sched)
    log_path = Path(args.log) if args.log else Path(str(out) + ".ldm_log.jsonl")
    _write_log(log, log_path)
    print(f"stage-2 final loss {log[-1]['total']:.6f}; weights -> {out}")
    return EXIT_OK


def cmd_send(args) -> int:
    cfg = _resolve_config(args)
    seg = load_segmap(args.input)
    mask = cfg.modality_mask()
    frame = encode_frame(seg, mask)
    Path(args.out).write_bytes(frame)
    print(f"framed {seg.width}x{seg.height} map -> {len(frame)} bytes at {args.out}")
    return EXIT_OK


def cmd_recv(args) -> int:
    cfg = _resolve_config(args)
    aes, den, sched = load_pipeline_weights(args.weights)
    if den is None or sched is None:
        raise MissingWeightsError(f"{args.weights} holds no trained denoiser")
    frame = Path(args.input).read_bytes()
    seg, mask = decode_frame(frame)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    from .diffusion import reconstruct

    stem = Path(args.input).stem
    written = []
    for m in (RGB, IR):
        if not mask & (1 << m):
            continue
        recon = reconstruct(seg, m, aes, den, sched, reconstruction_seed(cfg.seed, 0, m))
        if m == RGB:
            path = out_dir / f"{stem}_rgb.ppm"
            images.write_ppm(path, recon)
        else:
            path = out_dir / f"{stem}_ir.pgm"
            images.write_pgm(path, recon)
        written.append(str(path))
    print("reconstructed: " + ", ".join(written))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    if args.weights:
        cfg = replace(cfg, weights_path=str(args.weights))
    if args.out:
        cfg = replace(cfg, output_dir=str(args.out))
    report = run_end_to_end(cfg)
    out_dir = Path(cfg.output_dir) if cfg.output_dir else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    write_records(report, out_dir / "report.jsonl")
    write_text(report, out_dir / "report.txt")
    sys.stdout.write(render_text(report))
    return EXIT_OK


def cmd_report(args) -> int:
    records = read_records(args.input)
    report = EvalReport(records=records, aggregates=aggregate(records), seeds={})
    sys.stdout.write(render_text(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semcom",
        description="Segmentation-map semantic communication pipeline",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value lines)")
    common.add_argument("--seed", type=int, help="override the configured base seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a synthetic scene corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, help="number of scenes (default: eval_scenes)")
    p.add_argument("--base-seed", type=int, help="seed of scene 0 (default: eval_seed)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-ae", parents=[common], help="train the stage-1 autoencoders")
    p.add_argument("--out", required=True, help="output weights file (.wts)")
    p.add_argument("--log", help="loss log path (default: <out>.ae_log.jsonl)")
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-ldm", parents=[common], help="train the stage-2 denoiser")
    p.add_argument("--weights", required=True, help="weights file with stage-1 parameters")
    p.add_argument("--out", help="output weights file (default: extend --weights)")
    p.add_argument("--log", help="loss log path (default: <out>.ldm_log.jsonl)")
    p.set_defaults(func=cmd_train_ldm)

    p = sub.add_parser("send", parents=[common], help="frame a .segmap file for transmission")
    p.add_argument("--input", required=True, help=".segmap file")
    p.add_argument("--out", required=True, help="output .frame file")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("recv", parents=[common], help="decode a frame and reconstruct images")
    p.add_argument("--input", required=True, help=".frame file")
    p.add_argument("--weights", required=True, help="trained pipeline weights (.wts)")
    p.add_argument("--out", required=True, help="output directory for PPM/PGM images")
    p.set_defaults(func=cmd_recv)

    p = sub.add_parser("eval", parents=[common], help="run the end-to-end evaluation")
    p.add_argument("--weights", help="trained pipeline weights (.wts)")
    p.add_argument("--out", help="output directory for report and images")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="summarize a report.jsonl file")
    p.add_argument("--input", required=True, help="report.jsonl produced by eval")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BadConfigError as exc:
        print(f"error: bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except MissingWeightsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_WEIGHTS
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
