"""Command-line entry point: ``tcpdnet <command> ...``.

Exit codes: 0 success, 1 usage / configuration error, 2 data or checkpoint
error, 3 numeric failure. The dataset root may come from ``--data`` or the
``TCPDNET_DATA`` environment variable.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation, files, synthetic
from .checkpoint import load_checkpoint
from .errors import CheckpointError, ConfigError, DataError, InvalidInputError, NumericError
from .interp import bilinear_baseline
from .mosaic import CpfaPattern, synthesize_cpfa
from .nets import MODELS, demosaick_image
from .training import TrainConfig, by_split, load_dataset, train_loop

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
METHODS = ("bilinear", *MODELS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _pattern(text):
    try:
        return CpfaPattern.parse(text)
    except InvalidInputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _data_root(arg):
    return files.resolve_data_root(arg)


def _out_dir(arg) -> Path:
    if not arg:
        raise UsageError("--out is required")
    out = Path(arg)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _method_fn(method: str, pattern_override=None):
    """``bilinear`` or ``<model kind>=<checkpoint>`` -> (name, callable(raw, pattern))."""
    name, _, ckpt = method.partition("=")
    if name not in METHODS:
        raise UsageError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    if name == "bilinear":
        if ckpt:
            raise UsageError("the bilinear method takes no checkpoint")
        return name, lambda raw, p: bilinear_baseline(np.asarray(raw, dtype=np.float64), p)
    if not ckpt:
        raise UsageError(f"method {name!r} needs a checkpoint: {name}=PATH")
    model, _ = load_checkpoint(ckpt, kind=name, pattern=pattern_override)

    def run(raw, p):
        if p != model.pattern:
            raise DataError(f"raw pattern {p} does not match checkpoint pattern {model.pattern}")
        return demosaick_image(model, raw).numpy()

    return name, run


def cmd_make_dataset(args) -> int:
    out = _out_dir(args.out)
    splits = synthetic.make_dataset(
        out, n_scenes=args.scenes, seed=args.seed, height=args.height, width=args.width, split=tuple(args.split)
    )
    print(f"wrote {sum(len(v) for v in splits.values())} scenes to {out}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    root = _data_root(args.data)
    out = _out_dir(args.out)
    ids = files.list_scenes(root)
    if not ids:
        raise DataError(f"no scenes under {root}")
    for sid in ids:
        cube = files.load_scene(root / sid)
        raw = synthesize_cpfa(cube.astype(np.float64), args.pattern)
        files.save_raw(out / f"{sid}.png", raw, args.pattern, scene=sid)
    print(f"wrote {len(ids)} raw frames to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    if args.pattern is not None:
        overrides["pattern"] = args.pattern
    if args.method is not None:
        if args.method not in MODELS:
            raise UsageError(f"train --method must be one of {sorted(MODELS)}")
        overrides["model"] = args.method
    if args.loss is not None:
        overrides["loss_mode"] = args.loss
    if overrides:
        cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})
    root = _data_root(args.data or cfg.data_root)
    out = _out_dir(args.out or cfg.out_dir)
    res = train_loop(cfg, load_dataset(root), out_dir=out)
    final = res.losses[-1] if res.losses else float("nan")
    print(f"trained {cfg.iterations} iterations, final loss {final:.6f}; checkpoints in {out}")
    return EXIT_OK


def cmd_demosaick(args) -> int:
    raw, pattern = files.load_raw(args.raw)
    if args.pattern is not None:
        pattern = args.pattern
    method = args.method if args.checkpoint is None else f"{args.method}={args.checkpoint}"
    _, fn = _method_fn(method)
    h, w = raw.shape
    if h % 4 or w % 4:
        raise DataError(f"raw frame {args.raw} is {h}x{w}; both sides must be multiples of 4")
    cube = np.clip(fn(raw, pattern), 0.0, 1.0)
    out = _out_dir(args.out)
    files.save_scene(out, cube)
    if args.visuals:
        evaluation.save_visuals(out, cube, "")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    root = _data_root(args.data)
    out = _out_dir(args.out)
    methods = dict(_method_fn(m, args.pattern) for m in (args.method or ["bilinear"]))
    scenes = by_split(load_dataset(root), args.split)
    if not scenes:
        raise DataError(f"split {args.split!r} of {root} is empty")
    pattern = args.pattern or CpfaPattern()
    results = evaluation.compare_methods(
        methods, scenes, pattern, out_dir=out, save_images=not args.no_images, aop_source=args.aop_source
    )
    print(evaluation.format_table(m for _, m in results.values()))
    return EXIT_OK


def cmd_visualize(args) -> int:
    out = _out_dir(args.out)
    for path in args.scene:
        cube = files.load_scene(path).astype(np.float64)
        evaluation.save_visuals(out, cube, f"{Path(path).name}_")
    print(f"wrote visualizations to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tcpdnet", description="Two-step color-polarization demosaicking.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", help=f"dataset root (default: ${files.DATA_ENV})")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("make-dataset", help="write a procedural ground-truth dataset")
    common(sp, data=False)
    sp.add_argument("--scenes", type=int, default=40)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--height", type=int, default=192)
    sp.add_argument("--width", type=int, default=256)
    sp.add_argument("--split", type=int, nargs=3, default=(30, 2, 8), metavar=("TRAIN", "VAL", "TEST"))
    sp.set_defaults(func=cmd_make_dataset)

    sp = sub.add_parser("synthesize", help="CPFA raw frames (+ JSON sidecars) from every scene of a dataset")
    common(sp)
    sp.add_argument("--pattern", type=_pattern, default=CpfaPattern(), help="e.g. 90,45,135,0:RGGB")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("train", help="train a model")
    common(sp)
    sp.add_argument("--config", help="TrainConfig JSON file")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--pattern", type=_pattern)
    sp.add_argument("--method", help=f"model kind: {', '.join(MODELS)}")
    sp.add_argument("--loss", choices=("cp", "cp_ycbcr"))
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("demosaick", help="demosaick one raw frame into four RGB images")
    sp.add_argument("raw", help="raw PNG (pattern read from its JSON sidecar)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--method", default="bilinear", help=f"one of {', '.join(METHODS)}")
    sp.add_argument("--checkpoint", help="checkpoint for learned methods")
    sp.add_argument("--pattern", type=_pattern, help="override the sidecar pattern")
    sp.add_argument("--no-visuals", dest="visuals", action="store_false", help="skip S0 / AoP-DoP images")
    sp.set_defaults(func=cmd_demosaick)

    sp = sub.add_parser("eval", help="compare methods on a dataset split")
    common(sp)
    sp.add_argument("--method", action="append", help="bilinear or KIND=CHECKPOINT (repeatable)")
    sp.add_argument("--split", default="test", choices=("train", "val", "test"))
    sp.add_argument("--pattern", type=_pattern)
    sp.add_argument("--aop-source", default="green", choices=("green", "luma"))
    sp.add_argument("--no-images", action="store_true")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("visualize", help="S0, DoP, AoP and AoP-DoP images of scene directories")
    sp.add_argument("scene", nargs="+", help="directories holding i000..i135.png")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_visualize)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(f"tcpdnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InvalidInputError) as exc:
        print(f"tcpdnet: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"tcpdnet: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"tcpdnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
