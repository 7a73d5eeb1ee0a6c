"""Command-line entry point: ``tubefusion <command> [options]``.

Every ``RunConfig`` field is also a flag (``codebook_k`` -> ``--codebook-k``);
flags override values from ``--config``.  The exit status is 0 only when
every video under the dataset root was processed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from ..errors import TubeFusionError
from ..formats import atomic_write_text, write_json
from .config import RunConfig, load_config, parse_overrides
from .runs import (compare_temporal, ensure_codebook, evaluate_lstm, fused_dataset, load_model,
                   load_split, prepare, run_extract, save_model, stratified_split, sweep_ratio,
                   train_on, write_report, write_sweep)
from .synth import ClassSpec, SynthSpec, generate_dataset, preset

log = logging.getLogger("tubefusion")


def _add_config_flags(p):
    p.add_argument("--config", help="key = value config file")
    group = p.add_argument_group("run configuration")
    for f in dataclasses.fields(RunConfig):
        group.add_argument("--" + f.name.replace("_", "-"), dest="cfg_" + f.name, default=None,
                           metavar=f.name.upper())


def _config(args):
    base = load_config(args.config) if args.config else RunConfig()
    pairs = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return dataclasses.replace(base, **parse_overrides(pairs))


def _reports_dir(config):
    return Path(config.output_dir) / "reports"


def _finish(config, extracted):
    write_json(Path(config.output_dir) / "timings.json", extracted.timings)
    bad = {k: s for k, s in extracted.status.items() if s not in ("computed", "cached")}
    for k, s in bad.items():
        print(f"  {k}: {s}", file=sys.stderr)
    return 0 if not bad else 1


def cmd_extract(config, args):
    res = run_extract(config)
    counts = {}
    for s in res.status.values():
        counts[s.split(":")[0]] = counts.get(s.split(":")[0], 0) + 1
    print(f"{len(res.videos)} videos: " + ", ".join(f"{v} {k}" for k, v in sorted(counts.items())))
    return _finish(config, res)


def cmd_codebook(config, args):
    res = run_extract(config)
    cb, digest = ensure_codebook(config, res)
    print(f"codebook k={cb.k} from {cb.train_sample_count} HOOF vectors ({digest[:12]})")
    return _finish(config, res)


def cmd_train(config, args):
    data = prepare(config)
    split = stratified_split(data.labels, config.train_frac, config.seed)
    series, _ = fused_dataset(data, config, split[0])
    result = train_on(data, config, series, split[0])
    out = save_model(result.model, config, split)
    print(f"trained on {len(split[0])} videos, final loss {result.loss_curve[-1]:.4f}; "
          f"model in {out}")
    return _finish(config, data.extract)


def cmd_eval(config, args):
    data = prepare(config)
    train_idx, test_idx = load_split(config)
    model = load_model(config)
    series, fusion_info = fused_dataset(data, config, train_idx)
    report = evaluate_lstm(model, data, series, test_idx, len(train_idx), config, fusion_info)
    write_report(report, _reports_dir(config), "eval")
    print(f"accuracy {report.accuracy:.4f}  mAP {report.mAP:.4f}  ({report.n_test} test videos)")
    return _finish(config, data.extract)


def cmd_sweep(config, args):
    data = prepare(config)
    ratios = args.ratios.split(",") if args.ratios else None
    rows, reports = sweep_ratio(config, ratios, data)
    write_sweep(rows, _reports_dir(config))
    for row, rep in zip(rows, reports):
        write_report(rep, _reports_dir(config), "sweep_" + row["static:motion"].replace(":", "_"))
    print(f"{'static:motion':>14} {'accuracy':>9} {'mAP':>7}")
    for row in rows:
        mark = "  <- best" if row["best"] else ""
        print(f"{row['static:motion']:>14} {row['accuracy']:9.4f} {row['mAP']:7.4f}{mark}")
    return _finish(config, data.extract)


def cmd_compare(config, args):
    data = prepare(config)
    out = compare_temporal(config, data)
    write_report(out["lstm"], _reports_dir(config), "compare_lstm")
    write_report(out["forest"], _reports_dir(config), "compare_forest")
    atomic_write_text(_reports_dir(config) / "compare.json", json.dumps(
        {"lstm_accuracy": out["lstm"].accuracy, "forest_accuracy": out["forest"].accuracy,
         "margin": out["margin"]}, indent=2) + "\n")
    print(f"lstm {out['lstm'].accuracy:.4f}  forest {out['forest'].accuracy:.4f}  "
          f"margin {out['margin']:+.4f}")
    return _finish(config, data.extract)


def cmd_synth(args):
    if args.preset:
        spec = preset(args.preset, args.videos_per_class, args.seed)
    elif args.grammar:
        classes = []
        for item in args.grammar:
            name, sep, grammar = item.partition("=")
            if not sep:
                raise SystemExit(f"--grammar expects name=tok,tok,... got {item!r}")
            classes.append(ClassSpec(name, grammar, args.mode))
        spec = SynthSpec(classes, args.videos_per_class or 20, seed=args.seed)
    else:
        raise SystemExit("synth-gen needs --preset or at least one --grammar")
    if args.frames:
        spec.n_frames = args.frames
    if args.size:
        spec.size = args.size
    written = generate_dataset(spec, args.out)
    print(f"wrote {len(written)} videos under {args.out}")
    return 0


COMMANDS = {"extract": cmd_extract, "codebook": cmd_codebook, "train": cmd_train,
            "eval": cmd_eval, "sweep": cmd_sweep, "compare": cmd_compare}


def build_parser():
    parser = argparse.ArgumentParser(prog="tubefusion")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"extract": "compute per-video HOOF and static caches",
             "codebook": "train the HOOF codebook",
             "train": "fit the LSTM on the training split",
             "eval": "evaluate the saved LSTM on the held-out split",
             "sweep": "train/eval once per static:motion ratio",
             "compare": "LSTM vs random forest on identical features"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_config_flags(p)
        if name == "sweep":
            p.add_argument("--ratios", help="comma list of static:motion, default the 7 standard")
    p = sub.add_parser("synth-gen", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("motion", "mixed", "order"))
    p.add_argument("--grammar", action="append", metavar="NAME=TOK,TOK",
                   help="one class per flag, e.g. zigzag=left,up,left")
    p.add_argument("--mode", choices=("square", "scroll"), default="square")
    p.add_argument("--videos-per-class", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth-gen":
            return cmd_synth(args)
        config = _config(args)
        return COMMANDS[args.command](config, args)
    except (TubeFusionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
