"""Standard time-series augmentations used as ablation baselines.

Jittering, segment permutation and time warping follow Um et al. (2017);
mixup follows Zhang et al. (2018).  All functions take an explicit
``numpy.random.Generator`` and return a new :class:`SampleMatrix`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DimensionError, DomainError
from .ita import AugmentedPair, sample_rng
from .tensor_core import SampleMatrix, TensorDataset

__all__ = [
    "BaselineAugConfig",
    "jitter",
    "permutation",
    "timewarp",
    "timewarp_remap",
    "mixup",
    "mixup_weight",
    "augment_baseline",
    "KINDS",
]

KINDS = ("jitter", "permutation", "timewarp", "mixup")


@dataclass(frozen=True)
class BaselineAugConfig:
    kind: str = "jitter"
    jitter_sigma: float = 0.03
    perm_max_segments: int = 5
    timewarp_knots: int = 4
    timewarp_sigma: float = 0.2
    mixup_theta: float = 2.0
    mixup_cross_class: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown augmentation {self.kind!r}; expected one of {KINDS}")
        if self.jitter_sigma <= 0 or self.timewarp_sigma <= 0:
            raise DomainError("augmentation sigmas must be positive")
        if self.perm_max_segments < 1:
            raise DomainError("perm_max_segments must be >= 1")
        if self.timewarp_knots < 0:
            raise DomainError("timewarp_knots must be >= 0")
        if self.mixup_theta <= 0:
            raise DomainError("mixup_theta must be positive")


def jitter(sample: SampleMatrix, cfg: BaselineAugConfig, rng) -> SampleMatrix:
    """Add iid Gaussian noise with standard deviation ``cfg.jitter_sigma``."""
    noise = rng.normal(0.0, cfg.jitter_sigma, size=sample.shape)
    return sample.with_values(sample.values + noise)


def permutation(sample: SampleMatrix, cfg: BaselineAugConfig, rng, n_segments: Optional[int] = None) -> SampleMatrix:
    """Cut the time axis into 1..``perm_max_segments`` pieces and shuffle them.

    Every channel is cut at the same boundaries and no segment is empty.
    """
    J = sample.length
    if n_segments is None:
        n_segments = int(rng.integers(1, cfg.perm_max_segments + 1))
        while n_segments > J:
            n_segments = int(rng.integers(1, cfg.perm_max_segments + 1))
    if n_segments < 1 or n_segments > J:
        raise DomainError(f"cannot cut {J} time steps into {n_segments} segments")
    if n_segments == 1:
        return sample.with_values(sample.values)
    cuts = np.sort(rng.choice(np.arange(1, J), size=n_segments - 1, replace=False))
    segments = np.split(np.arange(J), cuts)
    order = rng.permutation(n_segments)
    idx = np.concatenate([segments[o] for o in order])
    return sample.with_values(sample.values[:, idx])


def timewarp_remap(J, cfg: BaselineAugConfig, rng):
    """Smooth, strictly increasing map of ``0..J-1`` onto ``[0, J-1]``.

    Warp speeds are a monotone-cubic curve through ``timewarp_knots + 2``
    anchors drawn from N(1, sigma^2) and clipped at 0.1; the remap is their
    running sum rescaled to end at ``J - 1``.
    """
    n_anchor = cfg.timewarp_knots + 2
    anchors = np.clip(rng.normal(1.0, cfg.timewarp_sigma, size=n_anchor), 0.1, None)
    knots = np.linspace(0.0, J - 1, n_anchor)
    speed = PchipInterpolator(knots, anchors)(np.arange(J))
    remap = np.concatenate([[0.0], np.cumsum(speed[:-1])])
    return remap * ((J - 1) / remap[-1])


def timewarp(sample: SampleMatrix, cfg: BaselineAugConfig, rng) -> SampleMatrix:
    """Resample every channel along a random smooth monotone time remap."""
    J = sample.length
    if J < 4:
        raise DomainError(f"time warping needs at least 4 time steps, got {J}")
    remap = timewarp_remap(J, cfg, rng)
    grid = np.arange(J, dtype=np.float64)
    out = np.stack([np.interp(remap, grid, channel) for channel in sample.values])
    return sample.with_values(out)


def mixup_weight(cfg: BaselineAugConfig, rng):
    return float(rng.beta(cfg.mixup_theta, cfg.mixup_theta))


def mixup(sample_a: SampleMatrix, sample_b: SampleMatrix, cfg: BaselineAugConfig, rng, lam=None) -> SampleMatrix:
    """``lam * a + (1 - lam) * b`` with ``lam ~ Beta(theta, theta)``; keeps a's label."""
    if sample_a.shape != sample_b.shape:
        raise DimensionError(f"mixup needs equal shapes, got {sample_a.shape} and {sample_b.shape}")
    if lam is None:
        lam = mixup_weight(cfg, rng)
    return sample_a.with_values(lam * sample_a.values + (1.0 - lam) * sample_b.values)


def augment_baseline(dataset: TensorDataset, cfg: BaselineAugConfig) -> List[AugmentedPair]:
    """One baseline augmentation per sample.

    ``prototype_index`` is the mixing partner for mixup and the sample itself
    for the other kinds.
    """
    pairs = []
    for n in range(len(dataset)):
        rng = sample_rng(cfg.seed, n)
        x = dataset[n]
        partner = n
        if cfg.kind == "jitter":
            out = jitter(x, cfg, rng)
        elif cfg.kind == "permutation":
            out = permutation(x, cfg, rng)
        elif cfg.kind == "timewarp":
            out = timewarp(x, cfg, rng)
        else:
            pool = np.arange(len(dataset)) if cfg.mixup_cross_class else np.flatnonzero(dataset.labels == x.label)
            partner = int(rng.choice(pool))
            out = mixup(x, dataset[partner], cfg, rng)
        pairs.append(AugmentedPair(n, partner, out))
    return pairs
