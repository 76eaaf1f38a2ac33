"""Command-line interface.

Subcommands: generate, train, eval, predict, gradcheck, paramcount.
A config file (simple key=value lines, given with --config) overrides any
flag of the same name.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .errors import EchoformerError
from .model import count_params, get_preset
from .phantom import PhantomConfig, generate_dataset, read_dataset, write_dataset
from .pipeline import TrainConfig, evaluate, load_checkpoint, save_checkpoint, train
from .metrics import report_to_csv


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echoformer")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="create a synthetic phantom dataset")
    gen.add_argument("--out", required=True, help="output dataset directory")
    gen.add_argument("--count", type=int, default=64)
    gen.add_argument("--frame-size", type=int, default=112)
    gen.add_argument("--min-frames", type=int, default=90)
    gen.add_argument("--max-frames", type=int, default=250)
    gen.add_argument("--min-cycle", type=int, default=24)
    gen.add_argument("--max-cycle", type=int, default=45)
    gen.add_argument("--noise", type=float, default=0.08)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--config", default=None)

    tr = sub.add_parser("train", help="train a model on a dataset")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--preset", default="reduced2")
    tr.add_argument("--method", default="mirror", choices=["random", "mirror"])
    tr.add_argument("--sd-mode", default="regression",
                    choices=["regression", "classification"])
    tr.add_argument("--epochs", type=int, default=10)
    tr.add_argument("--batch", type=int, default=4)
    tr.add_argument("--lr", type=float, default=1e-4)
    tr.add_argument("--dtype", default="float64", choices=["float64", "float32"])
    tr.add_argument("--dropout", type=float, default=None,
                    help="override the preset's drop probability during training")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--config", default=None)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ev.add_argument("--data", required=True)
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--out", default=None, help="metrics CSV path (default stdout)")
    ev.add_argument("--config", default=None)

    pr = sub.add_parser("predict", help="per-frame prediction trace for one video")
    pr.add_argument("--data", required=True)
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--video", default=None, help="video id (default: first)")
    pr.add_argument("--out", default=None, help="trace CSV path (default stdout)")
    pr.add_argument("--config", default=None)

    gc = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    gc.add_argument("--seeds", type=int, default=3)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--config", default=None)

    pc = sub.add_parser("paramcount", help="parameter accounting for a preset")
    pc.add_argument("--preset", default="full")
    pc.add_argument("--sd-mode", default="regression",
                    choices=["regression", "classification"])
    pc.add_argument("--config", default=None)

    return parser


def _apply_config_file(args: argparse.Namespace) -> None:
    """key=value lines override parsed flags; keys use flag spelling."""
    path = getattr(args, "config", None)
    if not path:
        return
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise EchoformerError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            attr = key.replace("-", "_")
            if not hasattr(args, attr):
                raise EchoformerError(f"{path}:{lineno}: unknown key {key!r}")
            current = getattr(args, attr)
            if isinstance(current, bool):
                setattr(args, attr, value.lower() in ("1", "true", "yes"))
            elif isinstance(current, int):
                setattr(args, attr, int(value))
            elif isinstance(current, float):
                setattr(args, attr, float(value))
            else:
                setattr(args, attr, value)


def _cmd_generate(args) -> int:
    config = PhantomConfig(
        frame_size=args.frame_size,
        num_frames_range=(args.min_frames, args.max_frames),
        cycle_range=(args.min_cycle, args.max_cycle),
        noise_level=args.noise,
        seed=args.seed,
    )
    videos = generate_dataset(config, args.count)
    write_dataset(videos, args.out)
    print(f"wrote {len(videos)} videos to {args.out}")
    return 0


def _cmd_train(args) -> int:
    videos = read_dataset(args.data)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                      method=args.method, sd_mode=args.sd_mode,
                      seed=args.seed, dtype=args.dtype, dropout=args.dropout)
    ckpt, history = train(cfg, videos, get_preset(args.preset))
    save_checkpoint(ckpt, args.out)
    last = history["epochs"][-1] if history["epochs"] else {}
    print(f"trained {args.preset}/{args.method}/{args.sd_mode} "
          f"for {ckpt.epoch} epochs; final train loss "
          f"{last.get('train_loss')}; checkpoint -> {args.out}")
    if history["aborted"]:
        print("training aborted on non-finite loss; checkpoint holds the last "
              "good epoch", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    videos = read_dataset(args.data)
    report = evaluate(ckpt, videos)
    csv_text = report_to_csv(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
    else:
        print(csv_text, end="")
    print(f"aFD ES={report.afd_es} ED={report.afd_ed} "
          f"MAE={report.mae} RMSE={report.rmse} R2={report.r2} "
          f"rejected={report.rejected_count}", file=sys.stderr)
    return 0


def _cmd_predict(args) -> int:
    from .pipeline import predict_video

    ckpt = load_checkpoint(args.checkpoint)
    videos = read_dataset(args.data)
    if args.video is not None:
        matches = [v for v in videos if v.video_id == args.video]
        if not matches:
            raise EchoformerError(f"video id {args.video!r} not in dataset")
        video = matches[0]
    else:
        video = videos[0]
    pred = predict_video(ckpt.model, video)

    lines = []
    if ckpt.sd_mode == "classification":
        lines.append("frame_index,p_transition,p_ed,p_es")
        for i in range(pred["processed_frames"]):
            probs = pred["sd_trace"][:, i]
            lines.append(f"{i * pred['factor']},{probs[0]!r},{probs[1]!r},{probs[2]!r}")
    else:
        lines.append("frame_index,sd_value")
        for i in range(pred["processed_frames"]):
            lines.append(f"{i * pred['factor']},{pred['sd_trace'][i]!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        print(text, end="")
    print(f"video {video.video_id}: ef_pred={pred['ef_percent']:.2f} "
          f"es={pred['es_indices']} ed={pred['ed_indices']} "
          f"rejected={pred['rejected']}", file=sys.stderr)
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradsuite import run_gradient_suite

    reports = run_gradient_suite(seeds=args.seeds, tol=args.tol)
    ok = True
    for rep in reports:
        print(rep)
        ok = ok and rep.passed
    return 0 if ok else 1


def _cmd_paramcount(args) -> int:
    preset = get_preset(args.preset)
    counts = count_params(preset, args.sd_mode)
    print(f"preset {preset.name} (layers={preset.stack.num_layers}, "
          f"embed={preset.stack.embed_dim}, ff={preset.stack.ff_dim}, "
          f"seq={preset.stack.max_seq})")
    print(f"  encoder            {counts['encoder']:>12,}")
    print(f"  stack              {counts['stack']:>12,}")
    print(f"  stack closed form  {counts['stack_closed_form']:>12,}")
    print(f"  heads              {counts['heads']:>12,}")
    print(f"  total              {counts['total']:>12,}")
    match = counts["stack"] == counts["stack_closed_form"]
    print(f"  closed-form match  {match}")
    return 0 if match else 1


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "gradcheck": _cmd_gradcheck,
    "paramcount": _cmd_paramcount,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(args)
        return _COMMANDS[args.command](args)
    except EchoformerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
