"""Command-line entry points.

Exit codes: 0 success, 2 bad user input, 3 I/O failure, 4 incompatible or
missing state (e.g. checkpoint hash mismatch).  The MOTIONFORGE_LOG
environment variable sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

from .config import RunConfig, load_config
from .diffcore.checkpoint import checkpoint_file_hash, load_checkpoint, save_checkpoint
from .diffcore.training import TrainConfig, make_blob_dataset, train, write_loss_csv
from .errors import FormatError, StateError, UserInputError
from .fieldcore import flo_bytes, flow_to_color
from .longgen import export_video
from .ops import (
    conditioning_from_arrows,
    flow_products,
    run_ablation,
    run_sample_clip,
    sample_long,
)
from .ppm import write_ppm
from .sparsectl import parse_arrow_spec

log = logging.getLogger("motionforge")

EXIT_OK = 0
EXIT_USER = 2
EXIT_IO = 3
EXIT_STATE = 4


def _setup_logging() -> None:
    level = os.environ.get("MOTIONFORGE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None) is not None:
        cfg.out = args.out
    if getattr(args, "weights", None) is not None:
        cfg.weights = args.weights
    return cfg


def cmd_flow(args) -> int:
    cfg = _load_cfg(args)
    spec = parse_arrow_spec(Path(args.spec).read_text())
    out_dir = Path(cfg.out or "flow_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    products = flow_products(
        spec,
        cfg.densify_params(spec.width, spec.height),
        cfg.refine_params(),
    )
    for name, field in products.items():
        (out_dir / f"{name}.flo").write_bytes(flo_bytes(field))
        write_ppm(flow_to_color(field), out_dir / f"{name}.ppm")
    print(f"wrote sparse/dense/refined flow to {out_dir}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    log.info("building %d training clips", cfg.train_clips)
    dataset = make_blob_dataset(
        cfg.train_clips,
        seed=cfg.seed,
        width=cfg.width,
        height=cfg.height,
        frames=cfg.clip_frames,
        velocity_range=cfg.velocity_range,
        blob_sigma=cfg.blob_sigma,
    )
    train_cfg = TrainConfig(
        steps=cfg.train_steps,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        seed=cfg.seed,
    )
    t0 = time.perf_counter()
    weights, history = train(dataset, train_cfg)
    minutes = (time.perf_counter() - t0) / 60.0
    out_path = Path(cfg.out or "toy_denoiser.ckpt")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(weights, out_path)
    write_loss_csv(history, out_path.with_suffix(".loss.csv"))
    final = weights.extra["final_loss"]
    baseline = weights.extra["baseline_loss"]
    print(
        f"trained {cfg.train_steps} steps in {minutes:.1f} min; "
        f"loss {baseline:.3f} -> {final:.3f} (ratio {final / baseline:.3f})"
    )
    print(f"checkpoint {out_path} sha256={checkpoint_file_hash(out_path)}")
    return EXIT_OK


def _require_weights(cfg: RunConfig):
    if not cfg.weights:
        raise UserInputError("no weights path given (flag --weights or config)")
    if not Path(cfg.weights).exists():
        raise StateError(f"checkpoint not found: {cfg.weights}")
    return load_checkpoint(cfg.weights)


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    weights = _require_weights(cfg)
    spec = parse_arrow_spec(Path(args.spec).read_text())
    cond = conditioning_from_arrows(
        spec, cfg.densify_params(spec.width, spec.height), cfg.refine_params()
    )
    frames = args.frames or cfg.sample_frames
    video, report = run_sample_clip(weights, cond, frames, cfg.seed)
    out_dir = Path(cfg.out or "sample_out")
    export_video(out_dir, video, report)
    if report["frame0_psnr"] < cfg.frame0_min_psnr:
        log.warning(
            "frame-0 PSNR %.1f dB below the configured bound %.1f dB",
            report["frame0_psnr"], cfg.frame0_min_psnr,
        )
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_sample_long(args) -> int:
    cfg = _load_cfg(args)
    weights = _require_weights(cfg)
    spec = parse_arrow_spec(Path(args.spec).read_text())
    cond = conditioning_from_arrows(
        spec, cfg.densify_params(spec.width, spec.height), cfg.refine_params()
    )
    video, report = sample_long(weights, cond, cfg.plan(), cfg.seed)
    out_dir = Path(cfg.out or "sample_long_out")
    export_video(out_dir, video, report)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_ablate_gamma(args) -> int:
    cfg = _load_cfg(args)
    weights = _require_weights(cfg)
    spec = parse_arrow_spec(Path(args.spec).read_text())
    cond = conditioning_from_arrows(
        spec, cfg.densify_params(spec.width, spec.height), cfg.refine_params()
    )
    gammas = [float(g) for g in args.gammas.split(",")]
    rows = run_ablation(weights, cond, cfg.plan(), gammas, cfg.seed, repeats=args.repeats)
    out_path = Path(cfg.out or "gamma_ablation.csv")
    with open(out_path, "w", newline="") as sink:
        writer = csv.DictWriter(
            sink, fieldnames=["gamma", "eval_count", "wall_ms", "boundary_psnr", "temcons"]
        )
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {out_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_cfg(args)
    app = create_app(weights_path=cfg.weights, config=cfg, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motionforge")
    parser.add_argument("--config", help="RunConfig JSON path")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    # the global flags are also accepted after the subcommand; SUPPRESS keeps
    # an omitted trailing flag from clobbering the leading one
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flow", parents=[common], help="arrow spec -> sparse/dense/refined .flo + previews")
    p.add_argument("--spec", required=True, help="arrow-spec JSON path")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("train", parents=[common], help="train the toy denoiser on synthetic clips")
    p.add_argument("--out", help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="sample one short clip")
    p.add_argument("--spec", required=True)
    p.add_argument("--weights", help="checkpoint path")
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sample-long", parents=[common], help="phased long-video sampling")
    p.add_argument("--spec", required=True)
    p.add_argument("--weights", help="checkpoint path")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sample_long)

    p = sub.add_parser("ablate-gamma", parents=[common], help="sweep the phase-split fraction")
    p.add_argument("--spec", required=True)
    p.add_argument("--weights", help="checkpoint path")
    p.add_argument("--gammas", default="0,0.25,0.5,0.8,1.0")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_ablate_gamma)

    p = sub.add_parser("serve", parents=[common], help="run the local JSON-over-HTTP service")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--weights", help="checkpoint path")
    p.add_argument("--ui", help="static UI directory served under /ui")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UserInputError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except StateError as exc:
        print(f"state error: {exc}", file=sys.stderr)
        return EXIT_STATE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
