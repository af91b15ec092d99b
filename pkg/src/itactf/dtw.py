"""Dynamic time warping between multichannel series and query-to-reference warping.

Series are ``I x K`` matrices (channels x time).  The pointwise distance is the
Euclidean norm over the channel vector (``standard``) or over a flattened
window of neighbouring frames (``shape``).  The step set is
``{(1, 0), (0, 1), (1, 1)}`` with unit weights and no window constraint.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numba as nb
import numpy as np

from .errors import ContractError, DimensionError, DomainError
from .tensor_core import SampleMatrix

__all__ = [
    "DtwVariant",
    "WarpPath",
    "DtwResult",
    "dtw_distance",
    "dtw_cost",
    "shape_descriptors",
    "local_cost_matrix",
    "warp_to_reference",
]


@dataclass(frozen=True)
class DtwVariant:
    kind: str = "standard"
    shape_window: int = 5

    def __post_init__(self):
        if self.kind not in ("standard", "shape"):
            raise DomainError(f"unknown DTW variant {self.kind!r}")
        if self.shape_window < 1 or self.shape_window % 2 == 0:
            raise DomainError(f"shape_window must be odd and >= 1, got {self.shape_window}")


STANDARD = DtwVariant()


class WarpPath(tuple):
    """Ordered ``(query_index, reference_index)`` pairs of an alignment."""

    def __new__(cls, pairs):
        return super().__new__(cls, tuple((int(k), int(l)) for k, l in pairs))

    @property
    def query_indices(self):
        return np.array([k for k, _ in self], dtype=np.int64)

    @property
    def reference_indices(self):
        return np.array([l for _, l in self], dtype=np.int64)

    def validate(self, query_length, reference_length):
        """Raise :class:`ContractError` unless this is a valid unit-step path."""
        if not self:
            raise ContractError("empty warp path")
        if self[0] != (0, 0) or self[-1] != (query_length - 1, reference_length - 1):
            raise ContractError(
                f"path must run from (0, 0) to ({query_length - 1}, {reference_length - 1}), "
                f"got {self[0]} .. {self[-1]}"
            )
        for (k0, l0), (k1, l1) in zip(self, self[1:]):
            dk, dl = k1 - k0, l1 - l0
            if dk not in (0, 1) or dl not in (0, 1) or dk + dl == 0:
                raise ContractError(f"invalid step {(k0, l0)} -> {(k1, l1)}")


class DtwResult(NamedTuple):
    cost: float
    path: WarpPath


def _frames(series):
    """Return a ``(time, features)`` float array from a sample or an I x K array."""
    x = series.values if isinstance(series, SampleMatrix) else np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DimensionError(f"series must be channels x time, got shape {x.shape}")
    if x.shape[1] == 0 or x.shape[0] == 0:
        raise DomainError("empty series")
    return np.ascontiguousarray(x.T, dtype=np.float64)


def shape_descriptors(frames, window):
    """Stack each frame with its ``window // 2`` neighbours on either side.

    ``frames`` is ``(time, I)``; edges are padded by replication, and the result
    is ``(time, window * I)`` with the window flattened time-major.
    """
    half = window // 2
    if half == 0:
        return frames
    padded = np.concatenate([np.repeat(frames[:1], half, axis=0), frames, np.repeat(frames[-1:], half, axis=0)])
    n = frames.shape[0]
    return np.concatenate([padded[o : o + n] for o in range(window)], axis=1)


@nb.njit(cache=True, nogil=True)
def _local_cost(q, r):
    K, F = q.shape
    L = r.shape[0]
    out = np.empty((K, L))
    for k in range(K):
        for l in range(L):
            s = 0.0
            for f in range(F):
                d = q[k, f] - r[l, f]
                s += d * d
            out[k, l] = np.sqrt(s)
    return out


@nb.njit(cache=True, nogil=True)
def _accumulate(cost):
    K, L = cost.shape
    acc = np.empty((K, L))
    acc[0, 0] = cost[0, 0]
    for k in range(1, K):
        acc[k, 0] = acc[k - 1, 0] + cost[k, 0]
    for l in range(1, L):
        acc[0, l] = acc[0, l - 1] + cost[0, l]
    for k in range(1, K):
        for l in range(1, L):
            best = acc[k - 1, l - 1]
            if acc[k - 1, l] < best:
                best = acc[k - 1, l]
            if acc[k, l - 1] < best:
                best = acc[k, l - 1]
            acc[k, l] = cost[k, l] + best
    return acc


@nb.njit(cache=True, nogil=True)
def _backtrack(acc):
    K, L = acc.shape
    path = np.empty((K + L - 1, 2), dtype=np.int64)
    k, l = K - 1, L - 1
    n = 0
    path[n, 0] = k
    path[n, 1] = l
    n += 1
    while k > 0 or l > 0:
        if k == 0:
            l -= 1
        elif l == 0:
            k -= 1
        else:
            diag = acc[k - 1, l - 1]
            vert = acc[k - 1, l]
            horz = acc[k, l - 1]
            # ties: diagonal, then vertical (query advances), then horizontal
            if diag <= vert and diag <= horz:
                k -= 1
                l -= 1
            elif vert <= horz:
                k -= 1
            else:
                l -= 1
        path[n, 0] = k
        path[n, 1] = l
        n += 1
    return path[:n][::-1]


def _prepare(query, reference, variant):
    q = _frames(query)
    r = _frames(reference)
    if q.shape[1] != r.shape[1]:
        raise DimensionError(f"channel mismatch: query has {q.shape[1]}, reference has {r.shape[1]}")
    if variant.kind == "shape":
        q = shape_descriptors(q, variant.shape_window)
        r = shape_descriptors(r, variant.shape_window)
    return np.ascontiguousarray(q), np.ascontiguousarray(r)


def local_cost_matrix(query, reference, variant: DtwVariant = STANDARD):
    """Pointwise distance matrix, query time on rows and reference time on columns."""
    q, r = _prepare(query, reference, variant)
    return _local_cost(q, r)


def dtw_cost(query, reference, variant: DtwVariant = STANDARD) -> float:
    """The DTW cost alone (no backtrace)."""
    q, r = _prepare(query, reference, variant)
    return float(_accumulate(_local_cost(q, r))[-1, -1])


def dtw_distance(query, reference, variant: DtwVariant = STANDARD) -> DtwResult:
    """Minimal-cost alignment of ``query`` onto ``reference``.

    Parameters
    ----------
    query, reference : SampleMatrix or array, shape (I, K) and (I, L)
    variant : DtwVariant

    Returns
    -------
    DtwResult
        ``cost`` is the summed pointwise distance along ``path``.
    """
    q, r = _prepare(query, reference, variant)
    acc = _accumulate(_local_cost(q, r))
    path = WarpPath(map(tuple, _backtrack(acc)))
    return DtwResult(float(acc[-1, -1]), path)


def warp_to_reference(query, reference, path) -> SampleMatrix:
    """Resample ``query`` onto the reference time axis along ``path``.

    Output column ``l`` is the mean of the query columns aligned to ``l``; the
    output keeps the query's label.
    """
    q = query.values if isinstance(query, SampleMatrix) else np.asarray(query, dtype=np.float64)
    r_shape = reference.shape if isinstance(reference, SampleMatrix) else np.shape(reference)
    label = query.label if isinstance(query, SampleMatrix) else 0
    if q.ndim != 2 or len(r_shape) != 2:
        raise DimensionError("query and reference must be channels x time matrices")
    if q.shape[0] != r_shape[0]:
        raise DimensionError(f"channel mismatch: query has {q.shape[0]}, reference has {r_shape[0]}")
    path = path if isinstance(path, WarpPath) else WarpPath(path)
    K, L = q.shape[1], r_shape[1]
    path.validate(K, L)
    ks = path.query_indices
    ls = path.reference_indices
    sums = np.zeros((q.shape[0], L))
    np.add.at(sums.T, ls, q[:, ks].T)
    counts = np.bincount(ls, minlength=L)
    return SampleMatrix(sums / counts, label)
