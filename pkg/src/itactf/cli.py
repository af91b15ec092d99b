"""Command-line interface.

Every configuration field is available as ``--<section>-<field>`` (for
example ``--ctf-beta 0.4``); flags override values from ``--config``.
Exit status is 0 on success, 1 on a library error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import typing
from pathlib import Path

import numpy as np

from . import pipeline
from .archive import ModelArchive, load_archive, save_archive
from .baseline_aug import KINDS, augment_baseline
from .classifier import predict, train_mlp
from .config import SECTIONS, RunConfig, apply_overrides, load_config, section_fields
from .ctf import fit, transform
from .data import (ZScoreStats, atomic_write_text, load_dataset, save_dataset, stratified_split, synth_dataset,
                   zscore_apply, zscore_fit)
from .errors import DomainError, ItaCtfError
from .ita import augment_dataset, pairs_to_dataset
from .metrics import evaluate

__all__ = ["main", "build_parser"]

log = logging.getLogger("itactf")


# -- config flags -------------------------------------------------------------


def _add_config_flags(parser):
    parser.add_argument("--config", type=Path, help="INI file with [run], [ita], [baseline], [ctf], [mlp] sections")
    hints = typing.get_type_hints(RunConfig)
    for section in SECTIONS:
        group = parser.add_argument_group(f"[{section}] overrides")
        for name, _, default in section_fields(hints[section]):
            if isinstance(default, tuple):
                default = ", ".join(str(v) for v in default)
            group.add_argument(f"--{section}-{name.replace('_', '-')}", dest=f"cfg__{section}__{name}",
                               metavar="VALUE", help=f"default: {default}")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for key, value in vars(args).items():
        if key.startswith("cfg__") and value is not None:
            _, section, name = key.split("__")
            overrides[f"{section}.{name}"] = value
    return apply_overrides(cfg, overrides)


# -- helpers ------------------------------------------------------------------


def _matrix_csv(path, M, header=None):
    lines = [",".join(header)] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in np.atleast_2d(M)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _read_predictions(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DomainError(f"cannot read predictions {path}: {exc}") from exc
    try:
        return np.array([int(r["predicted"]) for r in rows], dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise DomainError(f"{path}: expected an 'index,predicted' CSV") from exc


def _prepare(archive: ModelArchive, dataset):
    return zscore_apply(dataset, archive.zscore) if archive.zscore is not None else dataset


def _emit(text, out=None):
    sys.stdout.write(text)
    if out is not None:
        atomic_write_text(out, text)


def _kv_text(record):
    return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in record.items())


# -- commands -----------------------------------------------------------------


def cmd_synth(args):
    train, test, info = synth_dataset(
        num_classes=args.classes, per_class=args.per_class, n_channels=args.channels, length=args.length,
        rank=args.rank, noise=args.noise, warp=args.warp, seed=args.seed, coef_spread=args.spread,
        test_per_class=args.test_per_class,
    )
    out = Path(args.out)
    params = {k: v for k, v in info.items() if not isinstance(v, np.ndarray) and v is not None}
    paths = [save_dataset(train, out, "train", {"provenance": params})]
    if test is not None:
        paths.append(save_dataset(test, out, "test", {"provenance": params}))
    _emit("".join(f"wrote={p}\n" for p in paths))


def cmd_normalize(args):
    train = load_dataset(args.train)
    stats = zscore_fit(train)
    out = Path(args.out)
    paths = [save_dataset(zscore_apply(train, stats), out, "train")]
    for i, path in enumerate(args.test or []):
        paths.append(save_dataset(zscore_apply(load_dataset(path), stats), out, f"test{i}" if i else "test"))
    atomic_write_text(out / "zscore.json", json.dumps(stats.to_dict(), indent=1) + "\n")
    _emit("".join(f"wrote={p}\n" for p in paths) + f"wrote={out / 'zscore.json'}\n")


def cmd_augment(args):
    cfg = _resolve_config(args)
    train = load_dataset(args.train)
    if args.method == "ita":
        cfg_ita = dataclasses.replace(cfg.ita, seed=args.seed if args.seed is not None else cfg.ita.seed)
        pairs = augment_dataset(train, cfg_ita, jobs=cfg.run.jobs)
    else:
        base = dataclasses.replace(cfg.baseline, kind=args.method,
                                   seed=args.seed if args.seed is not None else cfg.baseline.seed)
        pairs = augment_baseline(train, base)
    extra = {"method": args.method, "prototype_index": [int(p.prototype_index) for p in pairs]}
    path = save_dataset(pairs_to_dataset(pairs, train), args.out, "augmented", extra)
    _emit(f"wrote={path}\nsamples={len(pairs)}\n")


def _load_zscore(path):
    if path is None:
        return None
    try:
        return ZScoreStats.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, ValueError, KeyError) as exc:
        raise DomainError(f"cannot read normalisation statistics {path}: {exc}") from exc


def cmd_fit(args):
    cfg = _resolve_config(args)
    train = load_dataset(args.train)
    aug = load_dataset(args.augmented) if args.augmented else None
    if aug is not None and (len(aug) != len(train) or not np.array_equal(aug.labels, train.labels)):
        raise DomainError("augmented dataset must be index-aligned with the training set")
    model, trace = fit(train, aug, cfg.ctf)
    save_archive(args.out, ModelArchive(model, cfg.ctf, zscore=_load_zscore(args.zscore)))
    if args.trace:
        _matrix_csv(args.trace, [[t.epoch, t.total, t.rec, t.con, t.reg] for t in trace],
                    ["epoch", "total", "reconstruction", "contrastive", "regularization"])
    _emit(f"wrote={args.out}\nepochs={len(trace)}\nfinal_loss={trace[-1].total!r}\n")


def cmd_transform(args):
    archive = load_archive(args.model)
    data = _prepare(archive, load_dataset(args.data))
    Z = transform(data, archive.model, archive.ctf.alpha)
    _matrix_csv(args.out, Z, [f"z{r}" for r in range(Z.shape[1])])
    _emit(f"wrote={args.out}\nrows={Z.shape[0]}\nrank={Z.shape[1]}\n")


def cmd_classify(args):
    cfg = _resolve_config(args)
    archive = load_archive(args.model)
    if args.train:
        train = load_dataset(args.train)
        if len(train) != archive.model.Z.shape[0]:
            raise DomainError(f"archive holds {archive.model.Z.shape[0]} coefficient rows, "
                              f"training manifest lists {len(train)} samples")
        mlp, _ = train_mlp(archive.model.Z, train.labels, cfg.mlp, archive.model.Z_aug, train.num_classes)
        archive = dataclasses.replace(archive, mlp=mlp, mlp_config=cfg.mlp)
        save_archive(args.out or args.model, archive)
        _emit(f"wrote={args.out or args.model}\n")
    if args.data:
        if archive.mlp is None:
            raise DomainError("archive has no classifier; pass --train first")
        data = _prepare(archive, load_dataset(args.data))
        pred = predict(archive.mlp, transform(data, archive.model, archive.ctf.alpha))
        atomic_write_text(args.predictions, "index,predicted\n" + "".join(f"{i},{p}\n" for i, p in enumerate(pred)))
        _emit(f"wrote={args.predictions}\nrows={len(pred)}\n")
    if not args.train and not args.data:
        raise DomainError("classify needs --train and/or --data")


def cmd_eval(args):
    truth = load_dataset(args.truth)
    pred = _read_predictions(args.predictions)
    record = evaluate(truth.labels, pred, truth.num_classes, args.ordinal, list(truth.class_names) or None)
    flat = {k: v for k, v in record.items() if k not in ("per_class", "confusion")}
    _emit(_kv_text(flat), args.out)
    if args.json:
        atomic_write_text(args.json, json.dumps(record, indent=1, sort_keys=True) + "\n")


def _train_test(args):
    train = load_dataset(args.train)
    if args.test:
        return train, load_dataset(args.test)
    return stratified_split(train, args.split, args.split_seed)


def cmd_run(args):
    cfg = _resolve_config(args)
    train, test = _train_test(args)
    report = pipeline.run_pipeline(cfg, train, test, out_dir=args.out, figures=not args.no_figures)
    _emit(report.to_text())


def cmd_sweep(args):
    cfg = _resolve_config(args)
    train, test = _train_test(args)
    grid = {k: v for k, v in (("S", args.S), ("R", args.R), ("beta", args.beta)) if v}
    if not grid:
        raise DomainError("sweep needs at least one of --S, --R, --beta")
    rows = pipeline.sweep(cfg, train, test, grid)
    if args.out:
        pipeline.write_sweep_outputs(rows, args.out, figures=not args.no_figures)
    _emit(pipeline.sweep_table_text(rows))


def _shape(text):
    try:
        values = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape {text!r} must be N,I,J,R,S integers") from None
    if len(values) != 5 or min(values) < 1:
        raise argparse.ArgumentTypeError(f"shape {text!r} must be five positive integers N,I,J,R,S")
    return pipeline.BenchShape(*values)


def cmd_bench(args):
    shapes = args.shapes or [pipeline.BenchShape()]
    rows = pipeline.bench(shapes, ita_samples=args.samples, repeats=args.repeats, ctf_epochs=args.epochs)
    _emit(pipeline.bench_table_text(rows), args.out)


# -- parser -------------------------------------------------------------------


def _split_args(p):
    p.add_argument("--train", required=True, type=Path, help="training manifest")
    p.add_argument("--test", type=Path, help="test manifest (default: stratified split of --train)")
    p.add_argument("--split", type=float, default=0.2, help="test fraction when --test is absent")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--no-figures", action="store_true", help="skip PNG figures")


def build_parser():
    parser = argparse.ArgumentParser(prog="itactf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labelled dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--test-per-class", type=int, default=0)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--rank", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--warp", type=float, default=0.2)
    p.add_argument("--spread", type=float, default=0.3, help="within-class coefficient std")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("normalize", help="Z-score datasets with training statistics")
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--test", type=Path, action="append")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("augment", help="write one augmentation per training sample")
    p.add_argument("--method", required=True, choices=("ita",) + KINDS)
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("fit", help="fit the factorisation and write a model archive")
    p.add_argument("--train", required=True, type=Path)
    p.add_argument("--augmented", type=Path, help="index-aligned augmentation manifest")
    p.add_argument("--zscore", type=Path, help="statistics JSON from `normalize` to embed")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--trace", type=Path, help="loss trace CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("transform", help="coefficient rows for a dataset")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("classify", help="train the classifier and/or predict labels")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--train", type=Path, help="manifest whose labels match the archive's rows")
    p.add_argument("--out", type=Path, help="archive to write (default: overwrite --model)")
    p.add_argument("--data", type=Path, help="manifest to predict")
    p.add_argument("--predictions", type=Path, default=Path("predictions.csv"))
    _add_config_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--truth", required=True, type=Path)
    p.add_argument("--predictions", required=True, type=Path)
    p.add_argument("--ordinal", action="store_true", help="also report MMAE")
    p.add_argument("--out", type=Path)
    p.add_argument("--json", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="full pipeline over all seeds")
    _split_args(p)
    p.add_argument("--out", required=True, type=Path)
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over S, R and beta")
    _split_args(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--S", type=int, nargs="+", help="prototype batch sizes")
    p.add_argument("--R", type=int, nargs="+", help="ranks")
    p.add_argument("--beta", type=float, nargs="+", help="contrastive weights")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="timing table for ITA and CTF")
    p.add_argument("--shapes", type=_shape, nargs="+", metavar="N,I,J,R,S")
    p.add_argument("--samples", type=int, default=8)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except ItaCtfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
