"""Dense third-order tensors and the multilinear kernels used by the solver.

A dataset is stored as one ``(N, I, J)`` array: N samples, I channels, J time
steps.  Unfoldings are row-major over ``(channel, time)``, i.e. entry
``i * J + j`` of an unfolded sample holds ``x[i, j]``, and :func:`khatri_rao`
uses the same ordering so that

    mode1_unfold(reconstruct_slice(z, A, B)) == z @ khatri_rao(A, B).T
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import linalg as sla

from .errors import DimensionError, DomainError, SingularMatrixError

__all__ = [
    "SampleMatrix",
    "TensorDataset",
    "FactorModel",
    "khatri_rao",
    "mode1_unfold",
    "reconstruct_slice",
    "reconstruct",
    "reconstruction_loss",
    "ridge_solve",
    "spd_inverse",
    "solve_right",
]

# Above this 2-norm condition number an unregularised normal matrix is
# treated as numerically singular.
SINGULAR_CONDITION = 1e12


@dataclass(frozen=True)
class SampleMatrix:
    """One multivariate time series: ``values`` is channels x time."""

    values: np.ndarray
    label: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DimensionError(f"sample must be a non-empty I x J matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("sample contains NaN or Inf entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "label", int(self.label))

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_channels(self):
        return self.values.shape[0]

    @property
    def length(self):
        return self.values.shape[1]

    def with_values(self, values):
        return SampleMatrix(values, self.label)


@dataclass(frozen=True)
class TensorDataset:
    """An ordered collection of N equal-shape samples.

    Parameters
    ----------
    values : array, shape (N, I, J)
    labels : int array, shape (N,)
    num_classes : int, optional
        Size of the label vocabulary P.  Defaults to ``max(labels) + 1``.
    class_names : sequence of str, optional
    """

    values: np.ndarray
    labels: np.ndarray
    num_classes: int = 0
    class_names: tuple = field(default=())

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        labels = np.array(self.labels, dtype=np.int64, copy=True).reshape(-1)
        if values.ndim != 3:
            raise DimensionError(f"dataset values must be (N, I, J), got shape {values.shape}")
        n = values.shape[0]
        if n < 1:
            raise DomainError("dataset must contain at least one sample")
        if values.shape[1] < 1 or values.shape[2] < 1:
            raise DimensionError(f"samples must be non-empty, got shape {values.shape[1:]}")
        if labels.shape[0] != n:
            raise DimensionError(f"{n} samples but {labels.shape[0]} labels")
        if not np.all(np.isfinite(values)):
            raise DomainError("dataset contains NaN or Inf entries")
        if np.any(labels < 0):
            raise DomainError("labels must be non-negative")
        num_classes = int(self.num_classes) or int(labels.max()) + 1
        if labels.max() >= num_classes:
            raise DomainError(f"label {int(labels.max())} out of range for {num_classes} classes")
        names = tuple(str(c) for c in self.class_names) or tuple(str(p) for p in range(num_classes))
        if len(names) != num_classes:
            raise DomainError(f"{len(names)} class names for {num_classes} classes")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "num_classes", num_classes)
        object.__setattr__(self, "class_names", names)

    @classmethod
    def from_samples(cls, samples: Iterable[SampleMatrix], num_classes=0, class_names=()):
        samples = list(samples)
        if not samples:
            raise DomainError("dataset must contain at least one sample")
        shapes = {s.shape for s in samples}
        if len(shapes) != 1:
            raise DimensionError(f"samples have differing shapes: {sorted(shapes)}")
        return cls(
            np.stack([s.values for s in samples]),
            np.array([s.label for s in samples]),
            num_classes=num_classes,
            class_names=class_names,
        )

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, n) -> SampleMatrix:
        return SampleMatrix(self.values[n], int(self.labels[n]))

    def __iter__(self):
        for n in range(len(self)):
            yield self[n]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def samples(self):
        return list(self)

    @property
    def n_channels(self):
        return self.values.shape[1]

    @property
    def length(self):
        return self.values.shape[2]

    @property
    def sample_shape(self):
        return self.values.shape[1:]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, indices) -> "TensorDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return TensorDataset(self.values[idx], self.labels[idx], self.num_classes, self.class_names)

    def replace_values(self, values) -> "TensorDataset":
        return TensorDataset(values, self.labels, self.num_classes, self.class_names)


@dataclass(frozen=True)
class FactorModel:
    """Learnt CP factors.

    ``A`` (I x R) holds sensor factors, ``B`` (J x R) temporal factors, ``Z``
    (N x R) the coefficients of the training samples and ``Z_aug`` those of
    their augmentations (``None`` for plain factorisation without
    augmentations).
    """

    A: np.ndarray
    B: np.ndarray
    Z: np.ndarray
    Z_aug: Optional[np.ndarray] = None

    def __post_init__(self):
        arrays = {"A": self.A, "B": self.B, "Z": self.Z}
        if self.Z_aug is not None:
            arrays["Z_aug"] = self.Z_aug
        ranks = set()
        for name, arr in arrays.items():
            arr = np.array(arr, dtype=np.float64, copy=True)
            if arr.ndim != 2:
                raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
            if np.isnan(arr).any():
                raise DomainError(f"{name} contains NaN entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
            ranks.add(arr.shape[1])
        if len(ranks) != 1:
            raise DimensionError(f"factor column counts differ: { {k: np.shape(v)[1] for k, v in arrays.items()} }")

    @property
    def rank(self):
        return self.A.shape[1]

    @property
    def sample_shape(self):
        return (self.A.shape[0], self.B.shape[0])


def _as_matrix(x, name):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {x.shape}")
    return x


def _values(x):
    if isinstance(x, SampleMatrix):
        return x.values
    return np.asarray(x, dtype=np.float64)


def khatri_rao(A, B):
    """Column-wise Kronecker product, shape ``(I*J, R)``.

    Row ``i * J + j`` holds ``A[i, r] * B[j, r]``.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if A.shape[1] != B.shape[1]:
        raise DimensionError(f"column counts differ: {A.shape[1]} vs {B.shape[1]}")
    return (A[:, None, :] * B[None, :, :]).reshape(A.shape[0] * B.shape[0], A.shape[1])


def mode1_unfold(sample):
    """Flatten a sample (or a stack of samples) row-major over (channel, time).

    A single ``I x J`` sample gives a length ``I*J`` vector; an ``(N, I, J)``
    stack gives an ``(N, I*J)`` matrix.
    """
    x = _values(sample)
    if x.ndim == 2:
        return x.reshape(-1)
    if x.ndim == 3:
        return x.reshape(x.shape[0], -1)
    raise DimensionError(f"expected a sample or a stack of samples, got shape {x.shape}")


def reconstruct_slice(z, A, B):
    """Return ``A @ diag(z) @ B.T``, the weighted sum of rank-one components."""
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if not (A.shape[1] == B.shape[1] == z.shape[0]):
        raise DimensionError(f"rank mismatch: z {z.shape[0]}, A {A.shape[1]}, B {B.shape[1]}")
    return (A * z) @ B.T


def reconstruct(Z, A, B):
    """Reconstruct every slice: ``out[n] = A @ diag(Z[n]) @ B.T``."""
    Z = _as_matrix(Z, "Z")
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    if not (A.shape[1] == B.shape[1] == Z.shape[1]):
        raise DimensionError(f"rank mismatch: Z {Z.shape[1]}, A {A.shape[1]}, B {B.shape[1]}")
    return np.einsum("ir,nr,jr->nij", A, Z, B, optimize=True)


def reconstruction_loss(dataset, Z, A, B):
    """Squared Frobenius error ``sum_n ||X[n] - A diag(Z[n]) B^T||^2``."""
    X = np.asarray(dataset, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[0] != X.shape[0]:
        raise DimensionError(f"{X.shape[0]} samples but {Z.shape[0]} coefficient rows")
    X_hat = reconstruct(Z, A, B)
    if X_hat.shape != X.shape:
        raise DimensionError(f"reconstruction shape {X_hat.shape} does not match data {X.shape}")
    return float(np.sum((X - X_hat) ** 2))


def _cholesky_inverse_apply(normal, rhs, alpha):
    try:
        factor = sla.cho_factor(normal, lower=False, check_finite=False)
    except sla.LinAlgError:
        factor = None
    if alpha == 0:
        cond = np.linalg.cond(normal)
        if factor is None or not np.isfinite(cond) or cond > SINGULAR_CONDITION:
            raise SingularMatrixError(
                f"normal matrix is singular at alpha=0 (condition estimate {cond:.3e})",
                condition=float(cond),
            )
    elif factor is None:
        raise SingularMatrixError("normal matrix is not positive definite", condition=float(np.linalg.cond(normal)))
    return sla.cho_solve(factor, rhs, check_finite=False)


def ridge_solve(design, targets, alpha=0.0):
    """Solve ``argmin_W ||design @ W - targets||_F^2 + alpha ||W||_F^2``.

    Uses the R x R normal equations with a Cholesky factorisation.

    Raises
    ------
    SingularMatrixError
        If ``alpha == 0`` and ``design.T @ design`` is numerically singular.
    """
    design = _as_matrix(design, "design")
    targets = np.asarray(targets, dtype=np.float64)
    vector_target = targets.ndim == 1
    if vector_target:
        targets = targets[:, None]
    if design.shape[0] < 1:
        raise DomainError("design matrix needs at least one row")
    if targets.shape[0] != design.shape[0]:
        raise DimensionError(f"design has {design.shape[0]} rows but targets have {targets.shape[0]}")
    if alpha < 0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    normal = design.T @ design + alpha * np.eye(design.shape[1])
    W = _cholesky_inverse_apply(normal, design.T @ targets, alpha)
    return W[:, 0] if vector_target else W


def spd_inverse(normal, alpha=0.0):
    """Inverse of a symmetric positive-definite normal matrix (already including ``alpha * I``)."""
    normal = _as_matrix(normal, "normal")
    return _cholesky_inverse_apply(normal, np.eye(normal.shape[0]), alpha)


def solve_right(rhs, normal, alpha=0.0):
    """Return ``rhs @ inv(normal)`` for a symmetric positive-definite ``normal``."""
    return _cholesky_inverse_apply(normal, np.asarray(rhs, dtype=np.float64).T, alpha).T
