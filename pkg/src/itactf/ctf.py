"""Contrastive CP factorisation fitted by alternating least squares.

The objective over originals ``X`` and augmentations ``X_aug`` is

    ||X - [[Z, A, B]]||^2 + ||X_aug - [[Z_aug, A, B]]||^2
    + beta * contrastive(Z, Z_aug)
    + alpha * (||Z||^2 + ||Z_aug||^2 + ||A||^2 + ||B||^2)

where ``[[Z, A, B]]`` reconstructs slice ``n`` as ``A diag(Z[n]) B^T`` and the
contrastive term is a subtraction-based cosine loss: average similarity of
non-corresponding rows scaled by ``gamma + 1`` minus average similarity of
corresponding rows.

Coefficient rows are solved row-wise by a fixed-point iteration started from
the ridge solution; ``A`` and ``B`` are closed-form ridge updates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional

import numpy as np

from .errors import DegenerateRowError, DimensionError, DivergenceError, DomainError
from .tensor_core import FactorModel, TensorDataset, khatri_rao, mode1_unfold, reconstruct, solve_right, spd_inverse

__all__ = [
    "CtfConfig",
    "EpochLoss",
    "LossParts",
    "RowUpdate",
    "PlateauStopper",
    "contrastive_geometry",
    "row_normalizer",
    "contrastive_loss",
    "contrastive_loss_trace",
    "total_loss",
    "row_objective",
    "coefficient_solver",
    "update_z_row",
    "update_z_rows",
    "update_factor",
    "init_factors",
    "fit",
    "transform",
]

DEGENERATE_NORM = 1e-12
MAX_BACKTRACK = 30
INITS = ("gaussian", "svd")


@dataclass(frozen=True)
class CtfConfig:
    rank: int = 16
    alpha: float = 1e-3
    beta: float = 0.4
    gamma: Optional[float] = None  # None: use the batch size
    max_epochs: int = 100
    plateau_rel_tol: float = 1e-3
    plateau_patience: int = 5
    batch_size: int = 32
    inner_row_iters: int = 5
    inner_row_tol: float = 1e-6
    init: str = "gaussian"
    normalize_factors: bool = True
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise DomainError(f"rank must be >= 1, got {self.rank}")
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("alpha and beta must be non-negative")
        if self.gamma is not None and self.gamma <= -1:
            raise DomainError(f"gamma must exceed -1, got {self.gamma}")
        if self.max_epochs < 1 or self.plateau_patience < 1 or self.inner_row_iters < 0:
            raise DomainError("max_epochs and plateau_patience must be >= 1, inner_row_iters >= 0")
        if self.batch_size < 1 or (self.beta > 0 and self.batch_size < 2):
            raise DomainError("batch_size must be >= 2 when beta > 0")
        if self.init not in INITS:
            raise DomainError(f"init must be one of {INITS}, got {self.init!r}")


class LossParts(NamedTuple):
    total: float
    rec: float
    con: float
    reg: float


class EpochLoss(NamedTuple):
    epoch: int
    total: float
    rec: float
    con: float
    reg: float


class RowUpdate(NamedTuple):
    z: np.ndarray
    iterations: int
    degenerate: bool


class PlateauStopper:
    """Signal a stop once the relative loss change stays below ``rel_tol`` for ``patience`` epochs."""

    def __init__(self, rel_tol=1e-3, patience=5):
        self.rel_tol = rel_tol
        self.patience = patience
        self.previous = None
        self.streak = 0

    def update(self, loss) -> bool:
        if self.previous is not None:
            if self.previous != 0:
                change = abs(loss - self.previous) / abs(self.previous)
            else:
                change = 0.0 if loss == 0 else math.inf
            self.streak = self.streak + 1 if change < self.rel_tol else 0
        self.previous = loss
        return self.streak >= self.patience


# -- contrastive term ---------------------------------------------------------


def contrastive_geometry(n, gamma=None):
    """Symmetric scalar matrix with ``-1/n`` on the diagonal and ``(gamma+1)/(n(n-1))`` elsewhere."""
    if n < 2:
        raise DomainError(f"contrastive geometry needs at least 2 rows, got {n}")
    gamma = float(n) if gamma is None else float(gamma)
    G = np.full((n, n), (gamma + 1.0) / (n * (n - 1)))
    np.fill_diagonal(G, -1.0 / n)
    return G


def _row_norms(Z, name):
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0):
        raise DegenerateRowError(f"{name} has zero-norm rows at {np.flatnonzero(norms == 0).tolist()}")
    return norms


def row_normalizer(Z):
    """Diagonal matrix of reciprocal row norms."""
    return np.diag(1.0 / _row_norms(np.asarray(Z, dtype=np.float64), "Z"))


def _unit_rows(Z):
    """Rows scaled to unit norm; zero rows stay zero."""
    norms = np.linalg.norm(Z, axis=1, keepdims=True)
    return np.divide(Z, norms, out=np.zeros_like(Z), where=norms > 0)


def _check_pair(Z, Z_aug):
    Z = np.asarray(Z, dtype=np.float64)
    Z_aug = np.asarray(Z_aug, dtype=np.float64)
    if Z.shape != Z_aug.shape or Z.ndim != 2:
        raise DimensionError(f"Z {Z.shape} and Z_aug {Z_aug.shape} must be equal-shape matrices")
    if Z.shape[0] < 2:
        raise DomainError("contrastive loss needs at least 2 rows")
    return Z, Z_aug


def contrastive_loss(Z, Z_aug, gamma=None) -> float:
    """Cosine contrastive loss summed over pairs of rows."""
    Z, Z_aug = _check_pair(Z, Z_aug)
    n = Z.shape[0]
    gamma = float(n) if gamma is None else float(gamma)
    cos = (Z / _row_norms(Z, "Z")[:, None]) @ (Z_aug / _row_norms(Z_aug, "Z_aug")[:, None]).T
    positive = np.trace(cos)
    negative = cos.sum() - positive
    return float((gamma + 1.0) / (n * (n - 1)) * negative - positive / n)


def contrastive_loss_trace(Z, Z_aug, gamma=None) -> float:
    """The same loss in matrix form, ``tr(Z^T D(Z) G D(Z_aug) Z_aug)``."""
    Z, Z_aug = _check_pair(Z, Z_aug)
    G = contrastive_geometry(Z.shape[0], gamma)
    return float(np.trace(Z.T @ row_normalizer(Z) @ G @ row_normalizer(Z_aug) @ Z_aug))


def _soft_contrastive(Z, Z_aug, gamma):
    # degenerate rows contribute nothing instead of aborting a training run
    n = Z.shape[0]
    if n < 2:
        return 0.0
    gamma = float(n) if gamma is None else float(gamma)
    cos = _unit_rows(Z) @ _unit_rows(Z_aug).T
    positive = np.trace(cos)
    return float((gamma + 1.0) / (n * (n - 1)) * (cos.sum() - positive) - positive / n)


def total_loss(X, X_aug, Z, Z_aug, A, B, alpha, beta, gamma=None, strict=True) -> LossParts:
    """Objective value with its reconstruction, contrastive and regulariser parts.

    ``X_aug``/``Z_aug`` may be ``None`` for plain factorisation; the contrastive
    part is then zero.  ``total = rec + beta * con + reg``.
    """
    X = np.asarray(X, dtype=np.float64)
    rec = float(np.sum((X - reconstruct(Z, A, B)) ** 2))
    reg = float(np.sum(np.square(Z)) + np.sum(np.square(A)) + np.sum(np.square(B)))
    con = 0.0
    if X_aug is not None:
        rec += float(np.sum((np.asarray(X_aug, dtype=np.float64) - reconstruct(Z_aug, A, B)) ** 2))
        reg += float(np.sum(np.square(Z_aug)))
        con = contrastive_loss(Z, Z_aug, gamma) if strict else _soft_contrastive(Z, Z_aug, gamma)
    reg *= alpha
    return LossParts(rec + beta * con + reg, rec, con, reg)


def row_objective(z, x, A, B, w2, alpha, beta):
    """Per-row objective ``||x - [[z, A, B]]||^2 + alpha ||z||^2 + beta <z/||z||, w2>``."""
    z = np.asarray(z, dtype=np.float64)
    resid = np.asarray(x, dtype=np.float64) - (A * z) @ B.T
    value = np.sum(resid**2) + alpha * z @ z
    if beta:
        value += beta * (z @ np.asarray(w2)) / np.linalg.norm(z)
    return float(value)


# -- coefficient updates ------------------------------------------------------


def coefficient_solver(A, B, alpha):
    """Return ``(khatri_rao(A, B), W3)`` with ``W3 = inv(A^T A * B^T B + alpha I)``."""
    gram = (A.T @ A) * (B.T @ B)
    W3 = spd_inverse(gram + alpha * np.eye(gram.shape[0]), alpha)
    return khatri_rao(A, B), W3


def update_z_rows(W1, W3, W2, beta, iters=5, tol=1e-6, safeguard=True):
    """Fixed-point row updates for a block of rows.

    Starting from the ridge solution ``z0 = w1 W3`` every row iterates

        z <- z0 - beta / (2 ||z||) * w2 (I - z^T z / ||z||^2) W3

    for at most ``iters`` steps, stopping early once its relative change drops
    below ``tol``.  The step from ``z`` to the new value equals
    ``-W3 grad / 2``, a preconditioned gradient step, so with ``safeguard``
    a step that would raise the row objective is halved until it does not
    (at most ``MAX_BACKTRACK`` times); a row with no acceptable step stops.
    Rows whose norm falls below 1e-12 are flagged degenerate and left alone.

    Returns
    -------
    Z : array (n, R)
    iterations : int array (n,)
    degenerate : bool array (n,)
    """
    W1 = np.atleast_2d(W1)
    Z0 = W1 @ W3
    Z = Z0.copy()
    n = Z.shape[0]
    iterations = np.zeros(n, dtype=np.int64)
    degenerate = np.linalg.norm(Z, axis=1) < DEGENERATE_NORM
    if beta == 0 or iters == 0:
        return Z, iterations, degenerate
    W2 = np.atleast_2d(W2)
    normal = np.linalg.inv(W3)

    def objective(z, w1, w2):
        # row objective up to the constant ||x||^2; +inf for collapsed rows
        norm = np.linalg.norm(z, axis=1)
        safe = np.where(norm < DEGENERATE_NORM, 1.0, norm)
        value = (np.einsum("nr,rs,ns->n", z, normal, z) - 2.0 * (z * w1).sum(axis=1)
                 + beta * (z * w2).sum(axis=1) / safe)
        return np.where(norm < DEGENERATE_NORM, np.inf, value)

    active = ~degenerate
    for _ in range(iters):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        z = Z[rows]
        w1, w2 = W1[rows], W2[rows]
        norm = np.linalg.norm(z, axis=1)
        projected = w2 - ((w2 * z).sum(axis=1) / norm**2)[:, None] * z
        cand = Z0[rows] - (beta / (2.0 * norm))[:, None] * (projected @ W3)
        if safeguard:
            step = cand - z
            f_old = objective(z, w1, w2)
            accept = objective(cand, w1, w2) <= f_old
            t = np.ones(len(rows))
            for _ in range(MAX_BACKTRACK):
                todo = np.flatnonzero(~accept)
                if todo.size == 0:
                    break
                t[todo] *= 0.5
                cand[todo] = z[todo] + t[todo, None] * step[todo]
                accept[todo] = objective(cand[todo], w1[todo], w2[todo]) <= f_old[todo]
        else:
            accept = np.linalg.norm(cand, axis=1) >= DEGENERATE_NORM
            degenerate[rows[~accept]] = True
        change = np.linalg.norm(cand - z, axis=1) / norm
        Z[rows[accept]] = cand[accept]
        iterations[rows[accept]] += 1
        active[rows[~accept | (change < tol)]] = False
    return Z, iterations, degenerate


def update_z_row(x_n, A, B, w2, cfg: CtfConfig) -> RowUpdate:
    """Solve one coefficient row given the factors and its contrastive direction ``w2``."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    x = mode1_unfold(x_n)
    if x.shape[0] != A.shape[0] * B.shape[0]:
        raise DimensionError(f"sample has {x.shape[0]} entries, factors expect {A.shape[0] * B.shape[0]}")
    KR, W3 = coefficient_solver(A, B, cfg.alpha)
    Z, iters, degenerate = update_z_rows(
        (x @ KR)[None], W3, np.asarray(w2, dtype=np.float64).reshape(1, -1), cfg.beta, cfg.inner_row_iters, cfg.inner_row_tol
    )
    return RowUpdate(Z[0], int(iters[0]), bool(degenerate[0]))


# -- factor updates -----------------------------------------------------------


def _mode_products(X, Z, other, which):
    N, I, J = X.shape
    if which == "A":
        XO = (X.reshape(N * I, J) @ other).reshape(N, I, -1)
    else:
        XO = np.tensordot(X, other, axes=([1], [0]))
    return np.einsum("nkr,nr->kr", XO, Z)


def update_factor(X, Z, other, which, alpha, X_aug=None, Z_aug=None):
    """Closed-form ridge update of ``A`` (``which='A'``, ``other=B``) or ``B`` (``which='B'``, ``other=A``).

    Fits originals and, when given, augmentations jointly:
    ``A = (M + M_aug) inv(Z^T Z * B^T B + Z_aug^T Z_aug * B^T B + alpha I)``
    with ``M = sum_n X[n] B diag(Z[n])``; the ``B`` update uses transposed slices.
    """
    if which not in ("A", "B"):
        raise DomainError(f"which must be 'A' or 'B', got {which!r}")
    X = np.asarray(X, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64)
    other = np.asarray(other, dtype=np.float64)
    mode_len = X.shape[2] if which == "A" else X.shape[1]
    if other.shape[0] != mode_len or Z.shape[0] != X.shape[0] or Z.shape[1] != other.shape[1]:
        raise DimensionError(f"inconsistent shapes: X {X.shape}, Z {Z.shape}, other {other.shape}")
    other_gram = other.T @ other
    M = _mode_products(X, Z, other, which)
    gram = (Z.T @ Z) * other_gram
    if X_aug is not None:
        Z_aug = np.asarray(Z_aug, dtype=np.float64)
        M = M + _mode_products(np.asarray(X_aug, dtype=np.float64), Z_aug, other, which)
        gram = gram + (Z_aug.T @ Z_aug) * other_gram
    return solve_right(M, gram + alpha * np.eye(gram.shape[0]), alpha)


# -- training -----------------------------------------------------------------


def init_factors(X, rank, method="gaussian", rng=None):
    """Initial ``(A, B)``: iid N(0, 1/R) entries, or leading singular vectors of the mode unfoldings."""
    rng = np.random.default_rng(rng)
    N, I, J = X.shape
    scale = 1.0 / math.sqrt(rank)
    A = rng.normal(0.0, scale, size=(I, rank))
    B = rng.normal(0.0, scale, size=(J, rank))
    if method == "svd":
        U_a = np.linalg.svd(X.transpose(1, 0, 2).reshape(I, -1), full_matrices=False)[0]
        U_b = np.linalg.svd(X.transpose(2, 0, 1).reshape(J, -1), full_matrices=False)[0]
        ka, kb = min(rank, U_a.shape[1]), min(rank, U_b.shape[1])
        A[:, :ka] = U_a[:, :ka]
        B[:, :kb] = U_b[:, :kb]
    return A, B


def _aug_array(augmentations, shape):
    if augmentations is None:
        return None
    if isinstance(augmentations, (list, tuple)) and augmentations and hasattr(augmentations[0], "augmented"):
        ordered = sorted(augmentations, key=lambda p: p.original_index)
        arr = np.stack([p.augmented.values for p in ordered])
    else:
        arr = np.asarray(augmentations, dtype=np.float64)
    if arr.shape != shape:
        raise DimensionError(f"augmentations have shape {arr.shape}, expected {shape}")
    return arr


def _check_finite(epoch, block, arr):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite values in {block} at epoch {epoch}", epoch=epoch, block=block)


def _normalize_columns(A, B, Z, Za):
    """Give A and B unit-norm columns, moving the scale into the coefficients."""
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    na = np.where(na > 0, na, 1.0)
    nb = np.where(nb > 0, nb, 1.0)
    scale = na * nb
    return A / na, B / nb, Z * scale, None if Za is None else Za * scale


def _batches(N, batch_size, order):
    n_batches = max(1, math.ceil(N / batch_size))
    return np.array_split(order, n_batches)


def fit(dataset, augmentations, cfg: CtfConfig, loss_hook=None):
    """Train the factorisation.

    Parameters
    ----------
    dataset : TensorDataset or array (N, I, J)
    augmentations : list of AugmentedPair, TensorDataset, array (N, I, J) or None
        Index-aligned with ``dataset``.  ``None`` fits a plain (non-contrastive)
        factorisation and requires ``cfg.beta == 0``.
    cfg : CtfConfig
    loss_hook : callable, optional
        ``loss_hook(epoch, loss) -> loss`` applied to each epoch-mean total
        before the stopping rule sees it.

    Returns
    -------
    model : FactorModel
        ``Z``/``Z_aug`` are recomputed over the full data with the final factors.
    trace : list of EpochLoss
    """
    X = np.asarray(dataset, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionError(f"data must be (N, I, J), got {X.shape}")
    X_aug = _aug_array(augmentations, X.shape)
    if X_aug is None and cfg.beta > 0:
        raise DomainError("a contrastive weight beta > 0 needs augmentations")
    N = X.shape[0]
    rng = np.random.default_rng(cfg.seed)
    A, B = init_factors(X, cfg.rank, cfg.init, rng)
    unfolded = mode1_unfold(X)
    unfolded_aug = None if X_aug is None else mode1_unfold(X_aug)
    stopper = PlateauStopper(cfg.plateau_rel_tol, cfg.plateau_patience)
    trace = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(N) if cfg.shuffle else np.arange(N)
        parts = []
        for idx in _batches(N, cfg.batch_size, order):
            KR, W3 = coefficient_solver(A, B, cfg.alpha)
            W1 = unfolded[idx] @ KR
            Z = W1 @ W3
            Za = None
            if X_aug is not None:
                W1a = unfolded_aug[idx] @ KR
                Za = W1a @ W3
            if cfg.beta > 0 and len(idx) >= 2:
                G = contrastive_geometry(len(idx), cfg.gamma)
                Z = update_z_rows(W1, W3, G @ _unit_rows(Za), cfg.beta, cfg.inner_row_iters, cfg.inner_row_tol)[0]
                Za = update_z_rows(W1a, W3, G @ _unit_rows(Z), cfg.beta, cfg.inner_row_iters, cfg.inner_row_tol)[0]
            _check_finite(epoch, "Z", Z)
            Xb = X[idx]
            Xab = None if X_aug is None else X_aug[idx]
            if Za is not None:
                _check_finite(epoch, "Z_aug", Za)
            A = update_factor(Xb, Z, B, "A", cfg.alpha, Xab, Za)
            _check_finite(epoch, "A", A)
            B = update_factor(Xb, Z, A, "B", cfg.alpha, Xab, Za)
            _check_finite(epoch, "B", B)
            if cfg.normalize_factors:
                A, B, Z, Za = _normalize_columns(A, B, Z, Za)
            parts.append(total_loss(Xb, Xab, Z, Za, A, B, cfg.alpha, cfg.beta, cfg.gamma, strict=False))
        mean = np.mean(np.array(parts), axis=0)
        total = float(mean[0]) if loss_hook is None else float(loss_hook(epoch, float(mean[0])))
        trace.append(EpochLoss(epoch, total, float(mean[1]), float(mean[2]), float(mean[3])))
        if stopper.update(total):
            break
    Z_full = transform(X, (A, B), cfg.alpha)
    Z_aug_full = None if X_aug is None else transform(X_aug, (A, B), cfg.alpha)
    return FactorModel(A, B, Z_full, Z_aug_full), trace


def transform(samples, model, alpha):
    """Coefficient rows (ridge solution, no contrastive term) for new samples.

    ``model`` is a FactorModel or an ``(A, B)`` pair.
    """
    A, B = (model.A, model.B) if isinstance(model, FactorModel) else model
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.shape[1:] != (A.shape[0], B.shape[0]):
        raise DimensionError(f"samples have shape {X.shape[1:]}, model expects {(A.shape[0], B.shape[0])}")
    KR, W3 = coefficient_solver(A, B, alpha)
    return mode1_unfold(X) @ KR @ W3
