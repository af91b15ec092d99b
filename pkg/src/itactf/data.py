"""Dataset files, Z-score normalisation, synthetic data and splitting.

On disk a dataset is a JSON manifest plus one CSV per sample.  Each CSV has J
rows (time) and I comma-separated columns (channels); paths in the manifest are
relative to the manifest's directory.
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .baseline_aug import BaselineAugConfig, timewarp
from .errors import DimensionError, DomainError, ParseError
from .tensor_core import SampleMatrix, TensorDataset

__all__ = [
    "SCHEMA_VERSION",
    "ZScoreStats",
    "atomic_write_text",
    "atomic_write_bytes",
    "write_sample_csv",
    "read_sample_csv",
    "save_dataset",
    "load_dataset",
    "zscore_fit",
    "zscore_apply",
    "zscore_normalize",
    "synth_dataset",
    "stratified_split",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MIN_STD = 1e-12


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


# -- sample files -------------------------------------------------------------


def _format_row(row):
    return ",".join(repr(float(v)) for v in row)


def write_sample_csv(path, values):
    """Write an I x J sample as J lines of I comma-separated values."""
    values = np.asarray(values, dtype=np.float64)
    atomic_write_text(path, "\n".join(_format_row(r) for r in values.T) + "\n")


def read_sample_csv(path, n_channels=None, length=None) -> np.ndarray:
    """Parse a sample CSV into an I x J array."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot read sample file {path}: {exc}") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        row = []
        for col, cell in enumerate(line.split(","), start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}:{lineno}:{col}: cannot parse {cell.strip()!r} as a number", path, lineno, col
                ) from None
        rows.append(row)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise DimensionError(f"{path}: rows have differing column counts {sorted(widths)}")
    arr = np.array(rows, dtype=np.float64).T
    if not rows:
        arr = np.zeros((0, 0))
    expected = (n_channels, length)
    if (n_channels is not None and arr.shape[0] != n_channels) or (length is not None and arr.shape[1] != length):
        raise DimensionError(
            f"{path}: expected {length} rows x {n_channels} columns (J x I), got {arr.shape[1]} x {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"{path}: non-finite values", path)
    return arr


# -- manifests ----------------------------------------------------------------


def save_dataset(dataset: TensorDataset, directory, name="dataset", extra=None) -> Path:
    """Write ``dataset`` under ``directory`` and return the manifest path."""
    directory = Path(directory)
    sample_dir = directory / f"{name}_samples"
    entries = []
    width = max(6, len(str(len(dataset))))
    for n, sample in enumerate(dataset):
        rel = f"{sample_dir.name}/{n:0{width}d}.csv"
        write_sample_csv(directory / rel, sample.values)
        entries.append({"path": rel, "label": sample.label})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "I": dataset.n_channels,
        "J": dataset.length,
        "P": dataset.num_classes,
        "class_names": list(dataset.class_names),
        "entries": entries,
    }
    if extra:
        manifest.update(extra)
    path = directory / f"{name}.json"
    atomic_write_text(path, json.dumps(manifest, indent=1) + "\n")
    return path


def load_dataset(manifest_path) -> TensorDataset:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DomainError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}: invalid JSON ({exc.msg})", manifest_path, exc.lineno, exc.colno) from None
    for key in ("I", "J", "P", "entries"):
        if key not in manifest:
            raise DomainError(f"{manifest_path}: manifest lacks {key!r}")
    if manifest.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise DomainError(f"{manifest_path}: unsupported schema_version {manifest['schema_version']}")
    entries = manifest["entries"]
    if not entries:
        raise DomainError(f"{manifest_path}: manifest lists no samples")
    I, J, P = int(manifest["I"]), int(manifest["J"]), int(manifest["P"])
    base = manifest_path.parent
    values = np.empty((len(entries), I, J))
    labels = np.empty(len(entries), dtype=np.int64)
    for n, entry in enumerate(entries):
        values[n] = read_sample_csv(base / entry["path"], I, J)
        labels[n] = int(entry["label"])
        if not 0 <= labels[n] < P:
            raise DomainError(f"{manifest_path}: entry {n} has label {labels[n]} outside 0..{P - 1}")
    return TensorDataset(values, labels, P, manifest.get("class_names") or ())


# -- normalisation ------------------------------------------------------------


@dataclass(frozen=True)
class ZScoreStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def zscore_fit(train: TensorDataset) -> ZScoreStats:
    """Per-channel mean and std pooled over all training samples and time steps."""
    X = np.asarray(train, dtype=np.float64)
    mean = X.mean(axis=(0, 2))
    std = X.std(axis=(0, 2))
    flat = std < MIN_STD
    if flat.any():
        warnings.warn(f"channels {np.flatnonzero(flat).tolist()} are constant; their std is set to 1", RuntimeWarning)
        std = np.where(flat, 1.0, std)
    return ZScoreStats(mean, std)


def zscore_apply(dataset, stats: ZScoreStats):
    X = np.asarray(dataset, dtype=np.float64)
    if X.shape[-2] != stats.mean.shape[0]:
        raise DimensionError(f"data has {X.shape[-2]} channels, statistics have {stats.mean.shape[0]}")
    out = (X - stats.mean[:, None]) / stats.std[:, None]
    return dataset.replace_values(out) if isinstance(dataset, TensorDataset) else out


def zscore_normalize(train: TensorDataset, others: Sequence[TensorDataset] = ()):
    """Normalise ``train`` and ``others`` with statistics from ``train`` only.

    Returns ``(train_norm, [others_norm...], stats)``.
    """
    stats = zscore_fit(train)
    return zscore_apply(train, stats), [zscore_apply(o, stats) for o in others], stats


# -- synthetic data -----------------------------------------------------------


def _temporal_patterns(J, R, rng):
    t = np.arange(J) / J
    freq = rng.uniform(0.5, 3.0, size=R)
    phase = rng.uniform(0, 2 * np.pi, size=R)
    centre = rng.uniform(0.15, 0.85, size=R)
    width = rng.uniform(0.08, 0.25, size=R)
    envelope = np.exp(-0.5 * ((t[:, None] - centre) / width) ** 2)
    return envelope * np.cos(2 * np.pi * freq * t[:, None] + phase) + 0.3 * envelope


def synth_dataset(
    num_classes=6,
    per_class=20,
    n_channels=8,
    length=64,
    rank=4,
    noise=0.1,
    warp=0.2,
    seed=0,
    coef_spread=0.3,
    test_per_class=0,
):
    """Labelled low-rank multichannel series with intra-class time warps.

    Shared factors ``A`` (I x rank) and smooth temporal patterns ``B``
    (J x rank) are drawn once; every class gets a coefficient mean, and each
    sample draws ``z ~ N(mean, coef_spread^2)``, forms ``A diag(z) B^T``,
    applies a random smooth time warp of strength ``warp`` and adds Gaussian
    noise of standard deviation ``noise``.

    Returns
    -------
    train : TensorDataset
    test : TensorDataset or None
        Drawn from the same generator when ``test_per_class > 0``.
    info : dict
        Generating parameters plus the ground-truth ``z`` of every sample.
    """
    for name, v in (("num_classes", num_classes), ("per_class", per_class), ("n_channels", n_channels),
                    ("length", length), ("rank", rank)):
        if v < 1:
            raise DomainError(f"{name} must be positive, got {v}")
    if noise < 0 or warp < 0 or coef_spread < 0:
        raise DomainError("noise, warp and coef_spread must be non-negative")
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n_channels, rank)) / math.sqrt(rank)
    B = _temporal_patterns(length, rank, rng)
    means = rng.normal(size=(num_classes, rank))
    warp_cfg = BaselineAugConfig(kind="timewarp", timewarp_sigma=warp) if warp > 0 else None

    def draw(count):
        labels = np.repeat(np.arange(num_classes), count)
        z = means[labels] + coef_spread * rng.normal(size=(labels.size, rank))
        values = np.einsum("ir,nr,jr->nij", A, z, B)
        if warp_cfg is not None and length >= 4:
            values = np.stack([timewarp(SampleMatrix(v), warp_cfg, rng).values for v in values])
        values = values + noise * rng.normal(size=values.shape)
        return TensorDataset(values, labels, num_classes), z

    train, z_train = draw(per_class)
    test, z_test = draw(test_per_class) if test_per_class > 0 else (None, None)
    info = {
        "num_classes": num_classes,
        "per_class": per_class,
        "test_per_class": test_per_class,
        "n_channels": n_channels,
        "length": length,
        "rank": rank,
        "noise": noise,
        "warp": warp,
        "coef_spread": coef_spread,
        "seed": seed,
        "class_means": means,
        "z_train": z_train,
        "z_test": z_test,
        "A": A,
        "B": B,
    }
    return train, test, info


def stratified_split(dataset: TensorDataset, test_fraction=0.2, seed=0):
    """Deterministic per-class split; every class keeps at least one training sample."""
    if not 0 < test_fraction < 1:
        raise DomainError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for p in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == p)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        n_test = min(int(round(test_fraction * members.size)), members.size - 1)
        test_idx.extend(members[:n_test])
        train_idx.extend(members[n_test:])
    if not test_idx:
        raise DomainError("split leaves the test set empty")
    return dataset.subset(np.sort(train_idx)), dataset.subset(np.sort(test_idx))
