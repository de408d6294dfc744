"""Command-line entry point.

Subcommands: synth, train, eval, ablate, predict, inspect, visualize.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure.  Diagnostics (including the resolved config of every run) go to
stderr; machine-readable output goes to stdout or files.

``TONGUEAGE_SEED`` provides the default for every --seed flag.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data as D
from . import trainer as T
from . import viz as V
from .augment import AugmentConfig
from .errors import ConfigError, FormatError, NumericsError, ShapeError
from .model import build_paper_model, load_checkpoint, save_checkpoint


def _default_seed() -> int:
    return int(os.environ.get("TONGUEAGE_SEED", "0"))


def _print_config(cmd: str, items: dict) -> None:
    print(f"# resolved config ({cmd})", file=sys.stderr)
    for key in sorted(items):
        print(f"{key}={items[key]}", file=sys.stderr)


def _shape_cell(shape) -> str:
    return "x".join(str(d) for d in shape)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    _print_config("synth", {
        "out": args.out, "recordings": args.recordings, "seed": args.seed,
        "frames_per_recording": args.frames_per_recording,
        "age_min": args.age_min, "age_max": args.age_max,
    })
    recs = D.synth_generate(
        args.recordings, args.seed, (args.age_min, args.age_max),
        args.frames_per_recording,
    )
    manifest = D.export_recordings(recs, args.out)
    print(manifest)
    return 0


def _resolve_train_config(args) -> T.TrainConfig:
    overrides = T.load_train_config(args.config) if args.config else {}
    fields = {}
    for key in ("epochs", "batch_size", "learning_rate", "dropout_rate",
                "seed", "precision"):
        flag = getattr(args, key)
        if flag is not None:
            fields[key] = flag
        elif key in overrides:
            fields[key] = overrides[key]
    if args.augment is not None:
        fields["augment"] = T.parse_strategy(args.augment)
    elif "augment" in overrides:
        fields["augment"] = overrides["augment"]
    if "seed" not in fields:
        fields["seed"] = _default_seed()
    return T.TrainConfig(**fields)


def _cmd_train(args) -> int:
    config = _resolve_train_config(args)
    items = asdict(config)
    items["augment"] = config.augment.describe()
    items.update(data=args.data, out=args.out, frame_stride=args.frame_stride,
                 train_fraction=args.train_fraction,
                 split_by_speaker=args.split_by_speaker)
    _print_config("train", items)
    dataset = D.build_dataset(args.data, args.frame_stride, args.train_fraction,
                              config.seed, args.split_by_speaker)
    model = T.build_model_for(config)
    _, history = T.train(model, dataset, config, out_dir=args.out)
    print(Path(args.out) / "metrics.csv")
    print(Path(args.out) / "best.ckpt")
    return 0


def _cmd_eval(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    _print_config("eval", {
        "model": args.model, "data": args.data, "split": args.split,
        "frame_stride": args.frame_stride, "train_fraction": args.train_fraction,
        "seed": seed,
    })
    model, _ = load_checkpoint(args.model)
    dataset = D.build_dataset(args.data, args.frame_stride, args.train_fraction,
                              seed, args.split_by_speaker)
    samples = {"train": dataset.train, "val": dataset.val,
               "all": dataset.samples}[args.split]
    mse, mae = T.evaluate(model, samples)
    print("split,mse,mae")
    print(f"{args.split},{mse!r},{mae!r}")
    return 0


def _cmd_ablate(args) -> int:
    config = _resolve_train_config(args)
    strategies = [T.parse_strategy(s) for s in args.strategies.split(",")]
    items = asdict(config)
    items["augment"] = config.augment.describe()
    items.update(data=args.data, strategies=args.strategies,
                 seed_mode=args.seed_mode, out=args.out or "-")
    _print_config("ablate", items)
    dataset = D.build_dataset(args.data, args.frame_stride, args.train_fraction,
                              config.seed, args.split_by_speaker)
    rows = T.run_ablation(dataset, strategies, config, args.seed_mode)
    lines = ["strategy,parameter,val_mse"]
    for row in rows:
        param = "" if row.parameter is None else repr(row.parameter)
        lines.append(f"{row.strategy},{param},{row.val_mse!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(args.out)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_predict(args) -> int:
    _print_config("predict", {
        "model": args.model, "raw": args.raw, "params": args.params or "-",
        "frame_stride": args.frame_stride,
    })
    model, _ = load_checkpoint(args.model)
    params = (D.read_param_file(args.params) if args.params
              else D.ParamFile(D.SCANLINES, D.ECHO_RETURNS))
    rec = D.load_recording(Path(args.raw).read_bytes(), params)
    frames = D.sample_frames(rec, args.frame_stride)
    print("frame_index,age_years")
    for i, frame in enumerate(frames):
        pred = model.forward(frame[None])[0, 0]
        print(f"{i * args.frame_stride},{float(pred)!r}")
    return 0


def _cmd_inspect(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    _print_config("inspect", {"model": args.model or "-", "seed": seed})
    if args.model:
        model, _ = load_checkpoint(args.model)
    else:
        model = build_paper_model(seed)
    print("layer,kind,output_shape,params")
    print(f"input,input,{_shape_cell(model.input_shape)},0")
    for name, kind, shape, count in model.architecture_rows():
        print(f"{name},{kind},{_shape_cell(shape)},{count}")
    print(f"total,,,{model.param_count()}")
    return 0


def _cmd_visualize(args) -> int:
    _print_config("visualize", {
        "model": args.model or "-", "raw": args.raw or "-",
        "params": args.params or "-", "curves": args.curves or "-",
        "layers": args.layers, "frame_index": args.frame_index, "out": args.out,
    })
    wrote_something = False
    if args.curves:
        history = T.read_metrics_csv(args.curves)
        img, csv_path = V.export_curves(history, args.out)
        print(img)
        print(csv_path)
        wrote_something = True
    if args.model:
        if not args.raw:
            raise ConfigError("visualizing activations needs --raw")
        model, _ = load_checkpoint(args.model)
        params = (D.read_param_file(args.params) if args.params
                  else D.ParamFile(D.SCANLINES, D.ECHO_RETURNS))
        rec = D.load_recording(Path(args.raw).read_bytes(), params)
        if not 0 <= args.frame_index < len(rec):
            raise ConfigError(
                f"frame index {args.frame_index} out of range 0..{len(rec) - 1}"
            )
        acts = V.extract_activations(model, rec.frames[args.frame_index],
                                     args.layers)
        for path in V.export_activation_images(acts, args.out):
            print(path)
        wrote_something = True
    if not wrote_something:
        raise ConfigError("nothing to do: pass --curves and/or --model with --raw")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frame-stride", type=int, default=150,
                   help="take one frame from every N (default 150)")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--split-by-speaker", action="store_true",
                   help="assign whole speakers to a split instead of frames")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value or JSON config file; flags win")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float,
                   default=None)
    p.add_argument("--dropout-rate", dest="dropout_rate", type=float,
                   default=None)
    p.add_argument("--augment", default=None,
                   help="none | rotation[:deg] | gaussian_noise[:sigma]")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--precision", choices=("single", "double"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tongueage",
        description="Age regression on raw ultrasound tongue frames.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--recordings", type=int, required=True)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--frames-per-recording", type=int, default=1)
    p.add_argument("--age-min", type=float, default=5.0)
    p.add_argument("--age-max", type=float, default=13.0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train on a manifest dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="run")
    _add_dataset_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="val")
    p.add_argument("--seed", type=int, default=None,
                   help="split seed (match the training run)")
    _add_dataset_flags(p)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="train once per augmentation strategy")
    p.add_argument("--data", required=True)
    p.add_argument("--strategies", required=True,
                   help="comma list, e.g. none,rotation:5,gaussian_noise:0.1")
    p.add_argument("--seed-mode", choices=("shared", "fresh"), default="fresh")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    _add_dataset_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("predict", help="predict ages for a raw recording")
    p.add_argument("--model", required=True)
    p.add_argument("--raw", required=True)
    p.add_argument("--params", default=None,
                   help="param sidecar (default: assume 63x412)")
    p.add_argument("--frame-stride", type=int, default=1)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("inspect", help="print the architecture table")
    p.add_argument("--model", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("visualize", help="export activation images / curves")
    p.add_argument("--model", default=None)
    p.add_argument("--raw", default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--frame-index", type=int, default=0)
    p.add_argument("--layers", default="all")
    p.add_argument("--curves", default=None, help="metrics.csv to plot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_visualize)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (FormatError, ConfigError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LookupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
