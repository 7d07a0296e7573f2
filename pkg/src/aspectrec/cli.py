"""Command-line interface.

Subcommands: synth, extract, train, eval, inspect-model. Exit codes:
0 success, 1 validation/configuration error, 2 runtime or numeric failure.
"""

import argparse
import csv
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig, config_from_file, parse_kv
from .dataio import (Scatterer, SynthSpec, confusable_spec, load_dataset,
                     per_class_subset, synth_generate, write_pgm)
from .pipeline import (evaluate, extract_features,
                       load_feature_archive, load_model,
                       save_feature_archive, save_model, train_from_features,
                       train_pipeline)
from .serialize import read_container


def _load_config(args):
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        cfg = config_from_file(args.config, base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _parse_synth_spec(path):
    with open(path, encoding="utf-8") as fh:
        pairs = parse_kv(fh.read())
    simple = {}
    scatterer_lines = []
    for key, value in pairs:
        if key == "scatterer":
            scatterer_lines.append(value)
        else:
            simple[key] = value
    kwargs = {}
    for key, conv in (("class_count", int), ("images_per_class", int),
                      ("image_size", int), ("speckle", float),
                      ("clutter", float), ("sweeps", int),
                      ("blob_sigma", float), ("depression_deg", float),
                      ("seed", int)):
        if key in simple:
            kwargs[key] = conv(simple.pop(key))
    if simple:
        raise ValueError(f"unknown synth spec keys: {sorted(simple)}")
    if not scatterer_lines:
        allowed = {"images_per_class", "image_size", "speckle", "sweeps",
                   "seed"}
        extra = set(kwargs) - allowed - {"class_count"}
        if extra:
            raise ValueError(f"keys {sorted(extra)} need explicit scatterer "
                             f"lines")
        if kwargs.get("class_count", 4) != 4:
            raise ValueError("default scatterer layout is 4-class; add "
                             "'scatterer = class,dy,dx,amp,prefDeg,widthDeg' "
                             "lines for other class counts")
        kwargs.pop("class_count", None)
        return confusable_spec(**kwargs)
    per_class = {}
    for line in scatterer_lines:
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 6:
            raise ValueError(f"scatterer line needs 6 fields "
                             f"(class,dy,dx,amp,prefDeg,widthDeg): {line!r}")
        class_id = int(parts[0])
        per_class.setdefault(class_id, []).append(Scatterer(
            dy=float(parts[1]), dx=float(parts[2]), amplitude=float(parts[3]),
            pref_aspect_deg=float(parts[4]), width_deg=float(parts[5])))
    class_count = kwargs.pop("class_count", len(per_class))
    if sorted(per_class) != list(range(class_count)):
        raise ValueError(f"scatterer classes {sorted(per_class)} must cover "
                         f"0..{class_count - 1}")
    return SynthSpec(class_count=class_count,
                     scatterers=tuple(tuple(per_class[c])
                                      for c in range(class_count)),
                     **kwargs)


def cmd_synth(args):
    spec = _parse_synth_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    images = synth_generate(spec)
    with open(out / "meta.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["file", "classId", "serial", "depressionDeg",
                         "aspectDeg"])
        for img in images:
            write_pgm(out / img.source, img.pixels, maxval=65535)
            writer.writerow([img.source, img.class_id, img.serial,
                             img.depression_deg, img.aspect_deg])
    print(f"wrote {len(images)} images to {out}")
    return 0


def cmd_extract(args):
    cfg = _load_config(args)
    images = load_dataset(args.dataset)
    features = extract_features(images, cfg.feature_config())
    save_feature_archive(args.out, cfg, images, features)
    print(f"extracted {features.shape[0]} descriptors of dim "
          f"{features.shape[1]} -> {args.out}")
    return 0


def cmd_train(args):
    data = Path(args.data)
    if data.is_dir():
        cfg = _load_config(args)
        images = load_dataset(data)
        if args.train_fraction is not None:
            images = per_class_subset(images, args.train_fraction, cfg.seed)
        bundle, logs = train_pipeline(images, cfg)
    else:
        archive_cfg, images, features = load_feature_archive(data)
        cfg = archive_cfg
        if args.config:
            cfg = config_from_file(args.config, base=cfg)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.train_fraction is not None:
            images_subset = per_class_subset(images, args.train_fraction,
                                             cfg.seed)
            rows = {id(img): i for i, img in enumerate(images)}
            idx = [rows[id(img)] for img in images_subset]
            images, features = images_subset, features[idx]
        bundle, logs = train_from_features(cfg, images, features)
    for stage in ("mlp", "blstm"):
        for stats in logs[stage]:
            metric = (f"error_rate={stats.error_rate:.4f}"
                      if hasattr(stats, "error_rate")
                      else f"accuracy={stats.accuracy:.4f}")
            print(f"{stage} epoch {stats.epoch:4d} loss={stats.loss:.6f} "
                  f"{metric}")
    save_model(bundle, args.out)
    final = logs["blstm"][-1]
    print(f"trained model -> {args.out} "
          f"(final per-step train accuracy {final.accuracy:.4f})")
    return 0


def _parse_range(text):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise ValueError(f"aspect range must be LO:HI, got {text!r}") from exc


def cmd_eval(args):
    bundle = load_model(args.model)
    images = load_dataset(args.dataset)
    aspect_range = _parse_range(args.aspect_range) if args.aspect_range else None
    report = evaluate(bundle, images,
                      noise_level=args.noise,
                      noise_seed=args.noise_seed,
                      aspect_range=aspect_range,
                      aspect_interval=args.aspect_interval)
    sys.stdout.write(report.format_table())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_kv_text())
        print(f"report -> {args.out}")
    return 0


def cmd_inspect_model(args):
    config_text, tensors = read_container(args.model)
    print("# config snapshot")
    sys.stdout.write(config_text)
    print("# tensors")
    total = 0
    for name, tensor in tensors:
        total += tensor.size
        shape = "x".join(str(d) for d in tensor.shape)
        print(f"{name:32s} {shape:>16s} |mean|={np.mean(np.abs(tensor)):.6g}")
    print(f"# {len(tensors)} tensors, {total} parameters")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="aspectrec",
        description="Multi-aspect target chip sequence recognition")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic dataset directory")
    p.add_argument("spec", help="key-value synth spec file")
    p.add_argument("outdir")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="extract descriptors to an archive")
    p.add_argument("dataset", help="dataset directory with meta.csv")
    p.add_argument("out", help="feature archive path")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the full pipeline")
    p.add_argument("data", help="dataset directory or feature archive")
    p.add_argument("out", help="model file path")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-fraction", type=float, default=None,
                   help="per-class fraction of training images to keep")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("model")
    p.add_argument("dataset")
    p.add_argument("--noise", type=float, default=None,
                   help="fraction of pixels replaced with uniform noise")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--aspect-range", default=None, metavar="LO:HI")
    p.add_argument("--aspect-interval", type=float, default=None,
                   metavar="DEG")
    p.add_argument("--out", default=None,
                   help="write machine-readable report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect-model", help="print a model's config and tensors")
    p.add_argument("model")
    p.set_defaults(func=cmd_inspect_model)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
