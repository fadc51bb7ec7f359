"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 no dish tower detected,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import synth
from .cnn.model import load_model, save_model, forward as cnn_forward
from .cnn.train import train as train_model
from dataclasses import replace

from .config import AppConfig, ConfigError, load_config
from .dishfeat import extract_patch, load_dataset
from .ellipses import bottom_y
from .overlay import emit_detection_overlays
from .pipeline import (Bill, NoDishTowerError, DetectionReport,
                       detect_ellipses, evaluate_classifier,
                       match_detections, run_pipeline)
from .raster import Raster

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_TOWER = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_image(path: str) -> Raster:
    try:
        return Raster.load(path)
    except OSError as exc:
        print(f"error: cannot read image {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def _load_cnn(path: str):
    try:
        return load_model(path)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load model {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)


def _detect(img, config, args):
    try:
        det = detect_ellipses(img, config.pipeline, seed=args.seed,
                              reconstruct=not getattr(args, "no_reconstruct", False))
    except NoDishTowerError:
        print("no dish tower detected")
        raise SystemExit(EXIT_NO_TOWER)
    if args.debug_overlays:
        emit_detection_overlays(det, args.debug_overlays)
    return det


def cmd_detect(args, config: AppConfig) -> int:
    img = _load_image(args.image)
    det = _detect(img, config, args)
    rows = [
        {"p": e.p, "q": e.q, "A": e.A, "B": e.B, "alpha": e.alpha,
         "bottom_y": bottom_y(e)}
        for e in det.stack.rows
    ]
    if args.json:
        print(json.dumps({"dishes": rows}, indent=2))
    else:
        print(f"{len(rows)} dish(es) detected (bottom first):")
        for i, r in enumerate(rows):
            print(f"  {i}: center=({r['p']:.1f},{r['q']:.1f}) "
                  f"A={r['A']:.1f} B={r['B']:.1f} alpha={r['alpha']:.3f}")
    return EXIT_OK


def cmd_classify(args, config: AppConfig) -> int:
    img = _load_image(args.image)
    model = _load_cnn(args.model)
    det = _detect(img, config, args)
    names = [name for name, _ in config.palette]
    out = []
    for i in range(len(det.stack.rows)):
        patch = extract_patch(det.image, det.stack, i)
        probs = cnn_forward(model, patch.pixels)
        cls = int(np.argmax(probs))
        out.append({"dish": i, "class": names[cls],
                    "confidence": float(probs[cls])})
    if args.json:
        print(json.dumps({"dishes": out}, indent=2))
    else:
        for row in out:
            print(f"dish {row['dish']} (from top): {row['class']} "
                  f"({row['confidence']:.2f})")
    return EXIT_OK


def cmd_bill(args, config: AppConfig) -> int:
    img = _load_image(args.image)
    model = _load_cnn(args.model)
    try:
        bill, det = run_pipeline(img, model, config, seed=args.seed)
    except NoDishTowerError:
        print("no dish tower detected")
        raise SystemExit(EXIT_NO_TOWER)
    if args.debug_overlays:
        emit_detection_overlays(det, args.debug_overlays)
    if args.json:
        print(json.dumps({
            "currency": bill.currency,
            "total": bill.total,
            "dishes": [
                {"dish": l.dish_index, "class": l.class_name,
                 "confidence": l.confidence, "price": l.price}
                for l in bill.lines
            ],
        }, indent=2))
    else:
        for l in bill.lines:
            print(f"dish {l.dish_index} (from top): {l.class_name:8s} "
                  f"{l.price:6d} {bill.currency}  ({l.confidence:.2f})")
        print(f"total: {bill.total} {bill.currency}")
    return EXIT_OK


def cmd_train(args, config: AppConfig) -> int:
    try:
        dataset = [(p, p.label) for p in load_dataset(args.data)]
    except OSError as exc:
        print(f"error: cannot read dataset: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    cnn_cfg = replace(config.cnn, seed=args.seed)
    if args.epochs is not None:
        cnn_cfg = replace(cnn_cfg, epochs=args.epochs)
    model, logs = train_model(dataset, cnn_cfg, log_path=args.log)
    save_model(model, args.out)
    last = logs[-1]
    print(f"trained {len(logs)} epochs; val_loss={last.val_loss:.4f} "
          f"val_accuracy={last.val_accuracy:.4f}")
    print(f"model written to {args.out}")
    return EXIT_OK


def cmd_synth(args, config: AppConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    palette = tuple(config.palette)
    if args.patch_corpus:
        patches = synth.make_patch_dataset(args.patch_corpus, args.seed,
                                           palette=palette)
        from .dishfeat import export_dataset
        manifest = export_dataset(
            [(p, f"synthetic:{args.seed}", i) for i, (p, _) in enumerate(patches)],
            out)
        print(f"wrote {len(patches)} patches; manifest: {manifest}")
        return EXIT_OK
    for k in range(args.count):
        spec = synth.random_spec(args.seed + k, n_dishes=tuple(args.dishes),
                                 clutter_max=args.clutter_max,
                                 noise_sigma=args.noise, palette=palette)
        gt = (synth.render_occluded(spec, args.occlude)
              if args.occlude else synth.render(spec))
        gt.image.save(out / f"scene_{k:04d}.png")
        (out / f"scene_{k:04d}.json").write_text(
            json.dumps(synth.ground_truth_sidecar(gt, palette)))
    print(f"wrote {args.count} scene(s) to {out}")
    return EXIT_OK


def cmd_eval_detect(args, config: AppConfig) -> int:
    scene_dir = Path(args.scenes)
    images = sorted(scene_dir.glob("*.png"))
    if not images:
        print(f"error: no scenes found in {scene_dir}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    total = DetectionReport(0, 0, 0)
    for img_path in images:
        sidecar = img_path.with_suffix(".json")
        truth, _labels = synth.load_sidecar(sidecar)
        img = _load_image(str(img_path))
        try:
            det = detect_ellipses(img, config.pipeline, seed=args.seed,
                                  reconstruct=not args.no_reconstruct)
            detected = list(det.stack.rows)
        except NoDishTowerError:
            detected = []
        total = total + match_detections(detected, truth)
    lines = ["tp,fp,gt,precision,recall",
             f"{total.tp},{total.fp},{total.gt},"
             f"{total.precision:.6f},{total.recall:.6f}"]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_eval_classify(args, config: AppConfig) -> int:
    model = _load_cnn(args.model)
    try:
        dataset = [(p, p.label) for p in load_dataset(args.data)]
    except OSError as exc:
        print(f"error: cannot read dataset: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    accuracy, matrix = evaluate_classifier(model, dataset)
    names = [name for name, _ in config.palette]
    if args.out_prefix:
        matrix.write_csv(f"{args.out_prefix}_confusion.csv", names)
        matrix.write_heatmap(f"{args.out_prefix}_confusion.png")
    print(f"accuracy: {accuracy:.4f} "
          f"({int(np.trace(matrix.counts))}/{int(matrix.counts.sum())})")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="dishstack",
                     description="Stacked-dish detection, classification "
                                 "and billing")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=str, default=None,
                        help="JSON config file")
    parser.add_argument("--debug-overlays", type=str, default=None,
                        help="directory for intermediate overlay images")
    # accept the global options after the subcommand as well; SUPPRESS keeps
    # the subparser from clobbering a value parsed before the subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--config", type=str, default=argparse.SUPPRESS)
    common.add_argument("--debug-overlays", type=str,
                        default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("detect", parents=[common],
                       help="detect the dish stack in an image")
    p.add_argument("image")
    p.add_argument("--no-reconstruct", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", parents=[common], help="classify each detected dish")
    p.add_argument("image")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_classify, no_reconstruct=False)

    p = sub.add_parser("bill", parents=[common], help="detect, classify and total the bill")
    p.add_argument("image")
    p.add_argument("--model", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bill)

    p = sub.add_parser("train", parents=[common], help="train the classifier from a manifest")
    p.add_argument("--data", required=True, help="manifest.tsv path")
    p.add_argument("--out", required=True, help="output model file")
    p.add_argument("--log", default=None, help="training log CSV")
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic scenes or patches")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--dishes", type=int, nargs=2, default=[3, 10])
    p.add_argument("--clutter-max", type=int, default=5)
    p.add_argument("--noise", type=float, default=0.005)
    p.add_argument("--occlude", type=float, default=0.0,
                   help="retained rim-arc fraction for one weak dish")
    p.add_argument("--patch-corpus", type=int, default=0,
                   help="emit N labeled patches instead of scenes")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-detect", parents=[common], help="precision/recall on a scene dir")
    p.add_argument("--scenes", required=True)
    p.add_argument("--out", default=None, help="metrics CSV path")
    p.add_argument("--no-reconstruct", action="store_true")
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("eval-classify", parents=[common], help="accuracy + confusion matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="manifest.tsv path")
    p.add_argument("--out-prefix", default=None)
    p.set_defaults(func=cmd_eval_classify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        config = load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, config)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
