"""Command-line interface.

Every subcommand takes ``--config <json>`` and ``--seed <u64>``. Stages hand
files to each other through the work directory::

    synth            -> <dataset>/{train,test}/<class>/<video>.vidf
    decompose        -> <work>/keyseq/*.kseq + index.json
    train-bank       -> <work>/bank/ (c{c}_k{j}.dict + manifest.json) or <work>/shared.dict
    describe         -> <work>/descriptors.matx + descriptors.json
    train-classifier -> <work>/model/ (model.dict + model.json)
    classify         -> <work>/predictions.json
    evaluate         -> <out>/report.json + confusion.csv
    ablate           -> <out>/ablation.json + one report per grid cell
    run              -> <out>/report.json + confusion.csv (all stages in memory)

Paths come from the config's ``paths`` section (``dataset``, ``work``, ``out``)
and may be overridden with ``--dataset``, ``--work`` and ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..classifier import classify_descriptors, load_model, save_model, train_classifier
from ..config import PipelineConfig, desk_config, load_config, validate
from ..decomposition import KeySequenceSet
from ..io import keysequence_bytes, keysequence_from_bytes, load_dictionary, load_matrix, save_dictionary, save_matrix
from ..itra import learn_dictionary_bank, load_bank, save_bank
from .baselines import learn_shared_dictionary
from .dataset import ingest, write_dataset
from .evaluation import evaluate
from .pipeline import (
    DESCRIPTORS,
    KEYFRAME_METHODS,
    TrainedPipeline,
    bank_training_sets,
    describe,
    run_experiment,
    stage_seed,
    query_descriptors,
    train_keysequences,
)
from .synth import SynthConfig, synth_gen

log = logging.getLogger("actsparse")

U64_MAX = 2 ** 64 - 1


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("UsageError", message)
        sys.exit(2)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value <= U64_MAX:
        raise argparse.ArgumentTypeError(f"seed must be in [0, 2^64), got {text}")
    return value


# -- context -----------------------------------------------------------------


class Context:
    def __init__(self, args):
        self.args = args
        self.cfg = load_config(args.config) if args.config else desk_config()
        paths = dict(self.cfg.extra.get("paths", {}))
        for key in ("dataset", "work", "out"):
            if getattr(args, key, None):
                paths[key] = getattr(args, key)
        self.paths = {k: Path(v) for k, v in paths.items()}
        self.seed = args.seed
        self.keyframes = self.cfg.extra.get("keyframes", "proposed")
        self.descriptor = self.cfg.extra.get("descriptor", "itra")
        if self.keyframes not in KEYFRAME_METHODS:
            raise CliError(f"config keyframes must be one of {KEYFRAME_METHODS}")
        if self.descriptor not in DESCRIPTORS:
            raise CliError(f"config descriptor must be one of {DESCRIPTORS}")

    def path(self, key: str) -> Path:
        if key not in self.paths:
            raise CliError(f"missing path {key!r}: set paths.{key} in the config or pass --{key}")
        return self.paths[key]

    def dataset(self):
        return ingest(self.path("dataset"))


# -- stages ------------------------------------------------------------------


def cmd_synth(ctx: Context) -> dict:
    section = ctx.cfg.extra.get("synth", {})
    scfg = SynthConfig(**section)
    ds = synth_gen(scfg, ctx.seed)
    write_dataset(ds, ctx.path("dataset"))
    return {"classes": ds.classes, "videos": len(ds.videos), "synth": asdict(scfg)}


def cmd_ingest_check(ctx: Context) -> dict:
    ds = ctx.dataset()
    summary = {"classes": ds.classes, "n_classes": ds.n_classes}
    for split in ("train", "test"):
        vids = ds.split(split)
        summary[split] = {
            "videos": len(vids),
            "per_class": [sum(1 for _, c in vids if c == k) for k in range(ds.n_classes)],
            "frame_counts": sorted({v.n_frames for v, _ in vids}),
            "frame_shapes": sorted({list(v.frames.shape[1:]).__repr__() for v, _ in vids}),
        }
    return summary


def cmd_decompose(ctx: Context) -> dict:
    validate(ctx.cfg)
    ds = ctx.dataset()
    sets, labels, _, centers = train_keysequences(ds, ctx.cfg, ctx.seed, ctx.keyframes)
    out = ctx.path("work") / "keyseq"
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for ks, c in zip(sets, labels):
        name = f"{ks.source_video}.kseq"
        (out / name).write_bytes(keysequence_bytes(ks))
        index.append({"file": name, "video": ks.source_video, "class": c, "centers": ks.centers})
    if centers is not None:
        for c, mat in enumerate(centers):
            save_matrix(out / f"kmeans_c{c}.matx", np.asarray(mat).T)
    (out / "index.json").write_text(json.dumps({"keyframes": ctx.keyframes, "entries": index}, indent=2) + "\n")
    return {"keysequence_sets": len(sets), "dir": str(out)}


def _load_keyseqs(ctx: Context):
    kdir = ctx.path("work") / "keyseq"
    index = json.loads((kdir / "index.json").read_text())
    sets, labels = [], []
    for e in index["entries"]:
        sets.append(keysequence_from_bytes((kdir / e["file"]).read_bytes(), e["video"], e["class"]))
        labels.append(e["class"])
    return sets, labels


def cmd_train_bank(ctx: Context) -> dict:
    sets, labels = _load_keyseqs(ctx)
    work = ctx.path("work")
    if ctx.descriptor == "shared":
        d = learn_shared_dictionary(sets, ctx.cfg.bank, stage_seed(ctx.seed, "shared-dict"))
        save_dictionary(work / "shared.dict", d)
        return {"shared_dictionary": str(work / "shared.dict"), "atoms": d.n_atoms}
    bank = learn_dictionary_bank(bank_training_sets(sets, labels), ctx.cfg.bank, stage_seed(ctx.seed, "bank"))
    save_bank(bank, work / "bank")
    return {"bank": str(work / "bank"), "dictionaries": len(bank.dicts), "n_a": bank.n_a}


def _load_bank_or_shared(ctx: Context):
    work = ctx.path("work")
    if ctx.descriptor == "shared":
        return None, load_dictionary(work / "shared.dict")
    return load_bank(work / "bank"), None


def cmd_describe(ctx: Context) -> dict:
    sets, labels = _load_keyseqs(ctx)
    bank, shared = _load_bank_or_shared(ctx)
    feats = np.stack([describe(ks, bank, c, ctx.cfg, ctx.descriptor, shared) for ks, c in zip(sets, labels)], axis=1)
    work = ctx.path("work")
    save_matrix(work / "descriptors.matx", feats)
    (work / "descriptors.json").write_text(json.dumps({"labels": labels, "videos": [ks.source_video for ks in sets],
                                                       "descriptor": ctx.descriptor}, indent=2) + "\n")
    return {"descriptors": list(feats.shape)}


def cmd_train_classifier(ctx: Context) -> dict:
    work = ctx.path("work")
    feats = load_matrix(work / "descriptors.matx")
    labels = json.loads((work / "descriptors.json").read_text())["labels"]
    by_class = {}
    for col, c in zip(feats.T, labels):
        by_class.setdefault(c, []).append(col)
    cc = ctx.cfg.classifier
    model = train_classifier({c: np.stack(v, axis=1) for c, v in sorted(by_class.items())}, cc.mu,
                             cc.sparsity_fraction, cc.ksvd_iters, stage_seed(ctx.seed, "classifier"))
    save_model(model, work / "model")
    return {"model": str(work / "model"), "atoms": int(model.b.shape[1]), "lambda5": model.lambda5}


def _rebuild_pipeline(ctx: Context, ds) -> TrainedPipeline:
    work = ctx.path("work")
    bank, shared = _load_bank_or_shared(ctx)
    model = load_model(work / "model")
    from ..descriptors import phog_matrix

    train = ds.split("train")
    per_class = [np.hstack([phog_matrix(v.frames, ctx.cfg.phog) for v, lab in train if lab == c])
                 for c in range(ds.n_classes)]
    centers = None
    if ctx.keyframes == "kmeans":
        centers = [load_matrix(work / "keyseq" / f"kmeans_c{c}.matx").T for c in range(ds.n_classes)]
    return TrainedPipeline(ctx.cfg, ctx.seed, ctx.keyframes, ctx.descriptor, ds.n_classes, per_class, model,
                           bank, shared, centers)


def cmd_classify(ctx: Context) -> dict:
    ds = ctx.dataset()
    pipe = _rebuild_pipeline(ctx, ds)
    rows = []
    for i, (video, c) in enumerate(ds.split("test")):
        res = classify_descriptors(query_descriptors(pipe, video, i), pipe.model, ctx.cfg.bank.pooling)
        rows.append({"video": video.id, "truth": c, "label": res.label, "partial_votes": res.partial_votes,
                     "per_class_mass": res.per_class_mass.tolist()})
    path = ctx.path("work") / "predictions.json"
    path.write_text(json.dumps({"classes": ds.classes, "predictions": rows}, indent=2) + "\n")
    return {"predictions": str(path), "videos": len(rows)}


def cmd_evaluate(ctx: Context) -> dict:
    data = json.loads((ctx.path("work") / "predictions.json").read_text())
    rows = data["predictions"]
    report = evaluate([r["label"] for r in rows], [r["truth"] for r in rows], len(data["classes"]),
                      data["classes"], ctx.cfg.digest(), ctx.seed)
    report.extra = {"keyframes": ctx.keyframes, "descriptor": ctx.descriptor}
    report.write(ctx.path("out"))
    return {"accuracy": report.accuracy, "out": str(ctx.path("out"))}


def cmd_run(ctx: Context) -> dict:
    ds = ctx.dataset()
    report, _ = run_experiment(ds, ctx.cfg, ctx.seed, ctx.keyframes, ctx.descriptor)
    report.write(ctx.path("out"))
    return {"accuracy": report.accuracy, "out": str(ctx.path("out"))}


def cmd_ablate(ctx: Context) -> dict:
    ds = ctx.dataset()
    grid = ctx.cfg.extra.get("ablation", {})
    keyframes = grid.get("keyframes", list(KEYFRAME_METHODS))
    descriptors = grid.get("descriptors", list(DESCRIPTORS))
    out = ctx.path("out")
    cells = []
    for kf in keyframes:
        for de in descriptors:
            report, _ = run_experiment(ds, ctx.cfg, ctx.seed, kf, de)
            report.write(out / f"{kf}-{de}")
            cells.append({"keyframes": kf, "descriptor": de, "accuracy": report.accuracy})
            log.info("%s/%s accuracy %.3f", kf, de, report.accuracy)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps({"seed": ctx.seed, "config_hash": ctx.cfg.digest(),
                                                   "cells": cells}, indent=2) + "\n")
    return {"cells": cells}


COMMANDS = {
    "synth": cmd_synth,
    "ingest-check": cmd_ingest_check,
    "decompose": cmd_decompose,
    "train-bank": cmd_train_bank,
    "describe": cmd_describe,
    "train-classifier": cmd_train_classifier,
    "classify": cmd_classify,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="actsparse", description="Key-sequence sparse coding action recognition.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config; defaults to the desk-scale settings")
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--dataset")
        p.add_argument("--work")
        p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        ctx = Context(args)
        result = COMMANDS[args.command](ctx)
    except (CliError, ValueError, OSError, KeyError, json.JSONDecodeError) as err:
        _emit_error(type(err).__name__, str(err))
        return 1
    sys.stdout.write(json.dumps(result, indent=2, default=str) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
