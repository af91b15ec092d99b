"""Targeted augmentation by DTW warping towards a soft class prototype.

For every training sample (the query) a mini-batch of S samples is drawn with
replacement from the training set.  Each batch member ``s`` is scored by its
centroid gap

    gap(s) = mean DTW distance to members of other classes
             - mean DTW distance to other members of its own class

and the member with the largest gap is the prototype.  The query is warped onto
the prototype's time axis and the result is its augmentation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, NamedTuple, Sequence

import numpy as np

from .dtw import STANDARD, DtwVariant, dtw_cost, dtw_distance, warp_to_reference
from .errors import DegenerateBatchError, DomainError
from .tensor_core import SampleMatrix, TensorDataset

__all__ = [
    "ItaConfig",
    "AugmentedPair",
    "centroid_gap",
    "batch_gaps",
    "soft_prototype",
    "augment_sample",
    "augment_dataset",
    "pairs_to_dataset",
    "sample_rng",
]

MAX_REDRAWS = 32


@dataclass(frozen=True)
class ItaConfig:
    batch_size: int = 6
    dtw_kind: str = "standard"
    shape_window: int = 5
    seed: int = 0
    same_class_prototype: bool = True

    def __post_init__(self):
        if self.batch_size < 2:
            raise DomainError(f"ITA batch_size must be >= 2, got {self.batch_size}")
        DtwVariant(self.dtw_kind, self.shape_window)

    @property
    def variant(self):
        return DtwVariant(self.dtw_kind, self.shape_window)


class AugmentedPair(NamedTuple):
    original_index: int
    prototype_index: int
    augmented: SampleMatrix


def sample_rng(seed, n):
    """Independent per-sample generator, so results do not depend on scheduling."""
    return np.random.default_rng([int(seed), int(n)])


def _pairwise_costs(batch, variant):
    S = len(batch)
    dist = np.zeros((S, S))
    for a in range(S):
        for b in range(a + 1, S):
            # step set is symmetric, so one DP per unordered pair suffices
            dist[a, b] = dist[b, a] = dtw_cost(batch[a], batch[b], variant)
    return dist


def _gaps(dist, labels):
    """Centroid gap per batch position; NaN where either group is empty."""
    S = len(labels)
    labels = np.asarray(labels)
    out = np.full(S, np.nan)
    for s in range(S):
        others = np.arange(S) != s
        same = others & (labels == labels[s])
        diff = labels != labels[s]
        if same.any() and diff.any():
            out[s] = dist[s, diff].mean() - dist[s, same].mean()
    return out


def batch_gaps(batch: Sequence[SampleMatrix], variant: DtwVariant = STANDARD):
    """Centroid gaps for every member of ``batch`` (NaN where undefined)."""
    return _gaps(_pairwise_costs(batch, variant), [b.label for b in batch])


def centroid_gap(s, batch: Sequence[SampleMatrix], variant: DtwVariant = STANDARD) -> float:
    """Centroid gap of ``batch[s]``.

    Raises
    ------
    DegenerateBatchError
        If no other batch member shares the label of ``batch[s]`` or none has a
        different label.
    """
    target = batch[s]
    same, diff = [], []
    for t, other in enumerate(batch):
        if t == s:
            continue
        group = same if other.label == target.label else diff
        group.append(dtw_cost(target, other, variant))
    if not same or not diff:
        raise DegenerateBatchError(
            f"batch position {s} has {len(same)} same-class and {len(diff)} different-class partners"
        )
    return float(np.mean(diff) - np.mean(same))


def _candidate_mask(labels, query_label, restrict):
    return labels == query_label if restrict else np.ones(len(labels), dtype=bool)


def _usable(labels, query_label, restrict):
    """Whether some candidate in the batch has a defined gap."""
    for s in np.flatnonzero(_candidate_mask(labels, query_label, restrict)):
        same = np.sum(labels == labels[s]) - 1
        if same > 0 and np.any(labels != labels[s]):
            return True
    return False


def _stratified_draw(dataset, query_label, S, rng):
    own = np.flatnonzero(dataset.labels == query_label)
    rest = np.flatnonzero(dataset.labels != query_label)
    n_own = max(2, math.ceil(S / 2))
    n_rest = max(1, S - n_own)
    return np.concatenate([rng.choice(own, n_own), rng.choice(rest, n_rest)])


def _draw_batch(dataset, query_label, cfg, rng):
    labels = dataset.labels
    for _ in range(MAX_REDRAWS + 1):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        if _usable(labels[idx], query_label, cfg.same_class_prototype):
            return idx
    return _stratified_draw(dataset, query_label, cfg.batch_size, rng)


def soft_prototype(query: SampleMatrix, dataset: TensorDataset, cfg: ItaConfig, rng) -> int:
    """Dataset index of the soft class prototype for ``query``."""
    if len(np.unique(dataset.labels)) < 2:
        raise DomainError("soft prototype selection needs at least two classes")
    if cfg.same_class_prototype and not np.any(dataset.labels == query.label):
        raise DomainError(f"query class {query.label} does not occur in the dataset")
    idx = _draw_batch(dataset, query.label, cfg, rng)
    batch = [dataset[i] for i in idx]
    gaps = batch_gaps(batch, cfg.variant)
    allowed = _candidate_mask(dataset.labels[idx], query.label, cfg.same_class_prototype)
    scored = np.where(allowed & ~np.isnan(gaps), gaps, -np.inf)
    return int(idx[int(np.argmax(scored))])


def augment_sample(n, dataset: TensorDataset, cfg: ItaConfig) -> AugmentedPair:
    query = dataset[n]
    proto = soft_prototype(query, dataset, cfg, sample_rng(cfg.seed, n))
    reference = dataset[proto]
    result = dtw_distance(query, reference, cfg.variant)
    return AugmentedPair(n, proto, warp_to_reference(query, reference, result.path))


def augment_dataset(dataset: TensorDataset, cfg: ItaConfig, jobs=1) -> List[AugmentedPair]:
    """One augmentation per training sample, ordered by sample index."""
    if len(np.unique(dataset.labels)) < 2:
        raise DomainError("ITA augmentation needs at least two classes")
    indices = range(len(dataset))
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda n: augment_sample(n, dataset, cfg), indices))
    return [augment_sample(n, dataset, cfg) for n in indices]


def pairs_to_dataset(pairs: Sequence[AugmentedPair], like: TensorDataset) -> TensorDataset:
    """Stack augmentations into a dataset aligned index-for-index with ``like``."""
    ordered = sorted(pairs, key=lambda p: p.original_index)
    return TensorDataset(
        np.stack([p.augmented.values for p in ordered]),
        np.array([p.augmented.label for p in ordered]),
        like.num_classes,
        like.class_names,
    )
