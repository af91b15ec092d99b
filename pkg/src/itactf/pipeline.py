"""End-to-end runs, hyperparameter sweeps and timing benchmarks.

A run is normalise -> augment -> fit -> transform -> classify -> evaluate,
repeated per seed and aggregated.  Reports contain no timestamps or absolute
paths, so the same configuration on the same data gives the same bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from . import plotting
from .archive import ModelArchive, save_archive
from .baseline_aug import BaselineAugConfig, augment_baseline
from .classifier import MlpModel, predict, train_mlp
from .config import RunConfig, apply_overrides, config_hash, config_to_text
from .ctf import CtfConfig, EpochLoss, fit, transform
from .data import ZScoreStats, atomic_write_text, zscore_normalize
from .errors import DomainError, ItaCtfError, StageError
from .ita import ItaConfig, augment_dataset, augment_sample
from .metrics import evaluate
from .tensor_core import FactorModel, TensorDataset

__all__ = [
    "SeedResult",
    "PipelineReport",
    "run_pipeline",
    "augment_for",
    "write_run_outputs",
    "SWEEP_PARAMS",
    "sweep",
    "write_sweep_outputs",
    "sweep_table_text",
    "BenchShape",
    "bench",
    "bench_table_text",
]

log = logging.getLogger(__name__)

SUMMARY_METRICS = ("balanced_accuracy", "weighted_f1", "accuracy", "mmae")


@dataclass
class SeedResult:
    seed: int
    metrics: Dict[str, object]
    trace: List[EpochLoss]
    model: FactorModel
    mlp: MlpModel
    zscore: Optional[ZScoreStats]
    config: RunConfig
    train_labels: np.ndarray

    @property
    def epochs(self):
        return len(self.trace)


@dataclass
class PipelineReport:
    config: RunConfig
    seeds: List[SeedResult]
    aggregate: Dict[str, float]
    provenance: Dict[str, object]

    def to_text(self) -> str:
        return _report_text(self)

    def to_record(self) -> Dict[str, object]:
        return {
            "provenance": self.provenance,
            "seeds": [_seed_record(r) for r in self.seeds],
            "aggregate": self.aggregate,
        }


# -- provenance ---------------------------------------------------------------


def _versions():
    out = {"python": platform.python_version()}
    for dist, key in (("artifact", "itactf"), ("numpy", "numpy"), ("scipy", "scipy"), ("numba", "numba")):
        try:
            out[key] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[key] = "unknown"
    return out


def dataset_hash(dataset: TensorDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(dataset.values, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(dataset.labels, dtype="<i8").tobytes())
    return h.hexdigest()


def _provenance(cfg, train, test):
    return {
        "config_sha256": config_hash(cfg),
        "seeds": list(cfg.run.seeds),
        "method": cfg.run.method,
        "train_sha256": dataset_hash(train),
        "test_sha256": dataset_hash(test),
        "train_shape": list(np.shape(train.values)),
        "test_shape": list(np.shape(test.values)),
        "versions": _versions(),
        "config": config_to_text(cfg),
    }


# -- one run ------------------------------------------------------------------


def augment_for(train: TensorDataset, cfg: RunConfig):
    """Augmentations for ``cfg.run.method``, or ``None`` for a plain factorisation.

    A zero contrastive weight always means no augmentations: the factors are
    then fitted on the original data only.
    """
    method = cfg.run.method
    if cfg.ctf.beta == 0 or method == "none":
        if method == "none" and cfg.ctf.beta > 0:
            raise DomainError("method 'none' needs ctf.beta = 0")
        return None
    if method == "ita":
        return augment_dataset(train, cfg.ita)
    return augment_baseline(train, dataclasses.replace(cfg.baseline, kind=method))


def _stage(name, seed, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ItaCtfError as exc:
        raise StageError(name, seed, exc) from exc


def _run_seed(cfg: RunConfig, train: TensorDataset, test: TensorDataset, seed: int) -> SeedResult:
    cfg = cfg.for_seed(seed)
    P = max(train.num_classes, test.num_classes)
    zstats = None
    if cfg.run.normalize:
        train, (test,), zstats = _stage("normalize", seed, zscore_normalize, train, [test])
    aug = _stage("augment", seed, augment_for, train, cfg)
    model, trace = _stage("fit", seed, fit, train, aug, cfg.ctf)
    Z_test = _stage("transform", seed, transform, test, model, cfg.ctf.alpha)
    mlp, _ = _stage("classify", seed, train_mlp, model.Z, train.labels, cfg.mlp, model.Z_aug, P)
    pred = _stage("classify", seed, predict, mlp, Z_test)
    names = list(train.class_names) or None
    metrics = _stage("eval", seed, evaluate, test.labels, pred, P, cfg.run.ordinal, names)
    return SeedResult(seed, metrics, trace, model, mlp, zstats, cfg, np.asarray(train.labels))


def _aggregate(results: Sequence[SeedResult]):
    out: Dict[str, float] = {"n_seeds": len(results)}
    for key in SUMMARY_METRICS:
        vals = [r.metrics[key] for r in results if key in r.metrics]
        if vals:
            out[f"{key}_mean"] = float(np.mean(vals))
            out[f"{key}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return out


def run_pipeline(cfg: RunConfig, train: TensorDataset, test: TensorDataset, out_dir=None, figures=True,
                 jobs=None) -> PipelineReport:
    """Run every seed of ``cfg`` on a train/test split.

    Seeds run concurrently on ``jobs`` threads (default ``cfg.run.jobs``);
    results are ordered by seed either way.  When ``out_dir`` is given the
    report, per-seed model archives, loss traces, metrics and the factor
    export are written there.

    Raises
    ------
    StageError
        Naming the stage and seed that failed.
    """
    if train.n_channels != test.n_channels or train.length != test.length:
        raise DomainError(f"train samples are {train.n_channels}x{train.length}, test {test.n_channels}x{test.length}")
    jobs = cfg.run.jobs if jobs is None else jobs
    seeds = list(cfg.run.seeds)
    if jobs > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(seeds))) as pool:
            results = list(pool.map(lambda s: _run_seed(cfg, train, test, s), seeds))
    else:
        results = [_run_seed(cfg, train, test, s) for s in seeds]
    report = PipelineReport(cfg, results, _aggregate(results), _provenance(cfg, train, test))
    if out_dir is not None:
        write_run_outputs(report, out_dir, figures=figures)
    return report


# -- report rendering ---------------------------------------------------------


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _seed_record(r: SeedResult):
    flat = {k: v for k, v in r.metrics.items() if k not in ("per_class", "confusion")}
    return {
        "seed": r.seed,
        "epochs": r.epochs,
        "final_loss": r.trace[-1].total if r.trace else None,
        "metrics": flat,
        "per_class": r.metrics["per_class"],
        "confusion": r.metrics["confusion"],
    }


def _metrics_lines(r: SeedResult):
    lines = [f"seed={r.seed}", f"epochs={r.epochs}", f"final_loss={_fmt(r.trace[-1].total)}"]
    for k, v in r.metrics.items():
        if k not in ("per_class", "confusion"):
            lines.append(f"{k}={_fmt(v)}")
    for name, stats in r.metrics["per_class"].items():
        lines.append(f"class.{name}=" + " ".join(f"{k}:{_fmt(v)}" for k, v in stats.items()))
    return lines


def _report_text(report: PipelineReport) -> str:
    prov = report.provenance
    lines = ["[provenance]"]
    for key in ("config_sha256", "method", "train_sha256", "test_sha256"):
        lines.append(f"{key}={prov[key]}")
    lines.append("train_shape=" + "x".join(str(s) for s in prov["train_shape"]))
    lines.append("test_shape=" + "x".join(str(s) for s in prov["test_shape"]))
    lines.append("seeds=" + ",".join(str(s) for s in prov["seeds"]))
    lines.extend(f"version.{k}={v}" for k, v in prov["versions"].items())
    for r in report.seeds:
        lines += ["", f"[seed {r.seed}]"] + _metrics_lines(r)
    lines += ["", "[aggregate]"] + [f"{k}={_fmt(v)}" for k, v in report.aggregate.items()]
    return "\n".join(lines) + "\n"


def _csv_text(rows, header=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _matrix_csv(M):
    return _csv_text([[repr(float(v)) for v in row] for row in np.atleast_2d(M)])


def write_run_outputs(report: PipelineReport, out_dir, figures=True):
    out = Path(out_dir)
    atomic_write_text(out / "report.txt", report.to_text())
    atomic_write_text(out / "report.json", json.dumps(report.to_record(), indent=1, sort_keys=True) + "\n")
    atomic_write_text(out / "config.ini", config_to_text(report.config))
    for r in report.seeds:
        seed_dir = out / f"seed_{r.seed}"
        save_archive(seed_dir / "model.ctf", ModelArchive(r.model, r.config.ctf, r.mlp, r.config.mlp, r.zscore))
        atomic_write_text(
            seed_dir / "loss_trace.csv",
            _csv_text([[t.epoch, repr(t.total), repr(t.rec), repr(t.con), repr(t.reg)] for t in r.trace],
                      ["epoch", "total", "reconstruction", "contrastive", "regularization"]),
        )
        atomic_write_text(seed_dir / "metrics.txt", "\n".join(_metrics_lines(r)) + "\n")
        atomic_write_text(seed_dir / "metrics.json", json.dumps(_seed_record(r), indent=1, sort_keys=True) + "\n")
        export = seed_dir / "export"
        atomic_write_text(export / "A.csv", _matrix_csv(r.model.A))
        atomic_write_text(export / "B.csv", _matrix_csv(r.model.B))
        for p in np.unique(r.train_labels):
            atomic_write_text(export / f"coefficients_class_{int(p)}.csv", _matrix_csv(r.model.Z[r.train_labels == p]))
        if figures:
            fig_dir = seed_dir / "figures"
            plotting.plot_factors(r.model.A, r.model.B, fig_dir / "factors.png")
            plotting.plot_class_coefficients(r.model.Z, r.train_labels, fig_dir / "coefficients.png")
            plotting.plot_loss_trace(r.trace, fig_dir / "loss_trace.png")
            plotting.plot_confusion(r.metrics["confusion"], fig_dir / "confusion.png")


# -- sweeps -------------------------------------------------------------------

SWEEP_PARAMS = {"S": "ita.batch_size", "R": "ctf.rank", "beta": "ctf.beta"}


def sweep(cfg: RunConfig, train: TensorDataset, test: TensorDataset, grid: Mapping[str, Sequence], jobs=None):
    """Run the pipeline over the Cartesian product of ``grid``.

    ``grid`` maps ``S``, ``R`` or ``beta`` to candidate values.  A failing
    point is recorded with ``status="failed"`` and the sweep moves on.

    Returns
    -------
    list of dict
        One row per grid point, in product order.
    """
    unknown = sorted(set(grid) - set(SWEEP_PARAMS))
    if unknown:
        raise DomainError(f"unknown sweep parameters {unknown}; use {sorted(SWEEP_PARAMS)}")
    names = [k for k in SWEEP_PARAMS if k in grid]
    if not names or any(len(grid[k]) == 0 for k in names):
        raise DomainError("sweep grid needs at least one value per parameter")
    points = [dict(zip(names, combo)) for combo in itertools.product(*(grid[k] for k in names))]

    def run_point(point):
        row = dict(point)
        try:
            point_cfg = apply_overrides(cfg, {SWEEP_PARAMS[k]: str(v) for k, v in point.items()})
            report = run_pipeline(point_cfg, train, test, jobs=1)
        except ItaCtfError as exc:
            log.warning("sweep point %s failed: %s", point, exc)
            row.update(status="failed", error=str(exc))
            return row
        row.update(status="ok", error="")
        row.update({k: v for k, v in report.aggregate.items() if k != "n_seeds"})
        return row

    jobs = cfg.run.jobs if jobs is None else jobs
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(run_point, points))
    return [run_point(p) for p in points]


def sweep_table_text(rows) -> str:
    keys = []
    for row in rows:
        keys.extend(k for k in row if k not in keys)
    return _csv_text([[_fmt(row.get(k, "")) for k in keys] for row in rows], keys)


def write_sweep_outputs(rows, out_dir, figures=True):
    out = Path(out_dir)
    atomic_write_text(out / "sweep.csv", sweep_table_text(rows))
    atomic_write_text(out / "sweep.json", json.dumps(rows, indent=1) + "\n")
    if figures:
        for param in SWEEP_PARAMS:
            if len({r.get(param) for r in rows if param in r}) > 1:
                plotting.plot_sweep(rows, param, out / f"trend_{param}.png")


# -- timing -------------------------------------------------------------------


@dataclass(frozen=True)
class BenchShape:
    N: int = 64
    I: int = 8
    J: int = 64
    R: int = 16
    S: int = 6

    @property
    def size(self):
        return self.N * self.I * self.J * self.R * self.S


def _bench_data(shape: BenchShape, seed):
    rng = np.random.default_rng(seed)
    labels = np.arange(shape.N) % 2
    return TensorDataset(rng.normal(size=(shape.N, shape.I, shape.J)), labels, 2)


def _time_ita(data, shape, samples):
    cfg = ItaConfig(batch_size=shape.S)
    idx = range(min(samples, shape.N))
    t0 = time.perf_counter()
    for n in idx:
        augment_sample(n, data, cfg)
    return (time.perf_counter() - t0) / len(idx)


def _time_ctf(data, shape, epochs):
    cfg = CtfConfig(rank=shape.R, beta=0.0, max_epochs=epochs + 1, plateau_patience=epochs + 2)
    stamps = []

    def hook(epoch, loss):
        stamps.append(time.perf_counter())
        return float(epoch)  # strictly changing loss keeps the stopping rule quiet

    fit(data, None, cfg, loss_hook=hook)
    return float(np.median(np.diff(stamps)))


def bench(shapes: Sequence[BenchShape], ita_samples=8, repeats=3, ctf_epochs=5, seed=0):
    """Time ITA per sample and CTF per epoch for each shape.

    Every repeat times all shapes in turn, so slow drift in machine load
    affects each shape alike; each shape keeps its best repeat.  One CTF
    timing is the median epoch time over ``ctf_epochs`` epochs.  Ratios are
    relative to the smallest shape (by ``N*I*J*R*S``).
    """
    if not shapes:
        raise DomainError("bench needs at least one shape")
    datasets = [_bench_data(shape, seed) for shape in shapes]
    augment_sample(0, datasets[0], ItaConfig(batch_size=shapes[0].S))  # compile kernels outside the timing
    ita = np.full(len(shapes), np.inf)
    ctf = np.full(len(shapes), np.inf)
    for _ in range(repeats):
        for k, (shape, data) in enumerate(zip(shapes, datasets)):
            ita[k] = min(ita[k], _time_ita(data, shape, ita_samples))
            ctf[k] = min(ctf[k], _time_ctf(data, shape, ctf_epochs))
    ref = int(np.argmin([s.size for s in shapes]))
    rows = []
    for k, shape in enumerate(shapes):
        row = dataclasses.asdict(shape)
        row["ita_sample_s"] = float(ita[k])
        row["ctf_epoch_s"] = float(ctf[k])
        row["ita_ratio"] = float(ita[k] / ita[ref])
        row["ctf_ratio"] = float(ctf[k] / ctf[ref])
        rows.append(row)
    return rows


def bench_table_text(rows) -> str:
    keys = ["N", "I", "J", "R", "S", "ita_sample_s", "ctf_epoch_s", "ita_ratio", "ctf_ratio"]
    return _csv_text([[f"{r[k]:.6g}" if isinstance(r[k], float) else r[k] for k in keys] for r in rows], keys)
