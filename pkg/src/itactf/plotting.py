"""Figures written to files with the non-interactive Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_factors", "plot_class_coefficients", "plot_loss_trace", "plot_confusion", "plot_sweep"]

_META = {"Software": None}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def plot_factors(A, B, path):
    """Heat maps of the channel factor A and the temporal factor B."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, mat, title, ylabel in ((axes[0], A, "A (channels)", "channel"), (axes[1], B, "B (time)", "time step")):
        im = ax.imshow(mat, aspect="auto", cmap="RdBu_r")
        ax.set_title(title)
        ax.set_xlabel("component")
        ax.set_ylabel(ylabel)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    return _save(fig, path)


def plot_class_coefficients(Z, labels, path, class_names=None):
    """One heat map row per sample, grouped by class, plus class means."""
    Z = np.asarray(Z)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    names = class_names or [str(c) for c in classes]
    order = np.argsort(labels, kind="stable")
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    im = axes[0].imshow(Z[order], aspect="auto", cmap="RdBu_r", interpolation="nearest")
    axes[0].set_title("coefficients by class")
    axes[0].set_xlabel("component")
    axes[0].set_ylabel("sample (sorted by class)")
    fig.colorbar(im, ax=axes[0])
    means = np.stack([Z[labels == c].mean(axis=0) for c in classes])
    im = axes[1].imshow(means, aspect="auto", cmap="RdBu_r", interpolation="nearest")
    axes[1].set_yticks(range(len(classes)), [names[int(c)] if int(c) < len(names) else str(c) for c in classes])
    axes[1].set_title("class mean coefficients")
    axes[1].set_xlabel("component")
    fig.colorbar(im, ax=axes[1])
    fig.tight_layout()
    return _save(fig, path)


def plot_loss_trace(trace, path):
    """``trace`` is a sequence of :class:`itactf.ctf.EpochLoss`."""
    epochs = [t.epoch for t in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [t.total for t in trace], label="total")
    ax.plot(epochs, [t.rec for t in trace], label="reconstruction", linestyle="--")
    con = np.array([t.con for t in trace])
    if np.any(con != 0):
        ax.plot(epochs, con, label="contrastive", linestyle=":")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_confusion(counts, path, class_names=None):
    counts = np.asarray(counts)
    P = counts.shape[0]
    names = class_names or [str(p) for p in range(P)]
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * P, 1.0 + 0.6 * P))
    ax.imshow(counts, cmap="Blues")
    for t in range(P):
        for p in range(P):
            ax.text(p, t, str(counts[t, p]), ha="center", va="center", fontsize=8)
    ax.set_xticks(range(P), names, rotation=45)
    ax.set_yticks(range(P), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(rows: Sequence[Mapping], param, path, metric="balanced_accuracy"):
    """Mean and std of ``metric`` against ``param``; failed rows are skipped."""
    ok = [r for r in rows if r.get("status") == "ok"]
    ok.sort(key=lambda r: r[param])
    xs = [r[param] for r in ok]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(xs, [r[f"{metric}_mean"] for r in ok], yerr=[r[f"{metric}_std"] for r in ok], marker="o", capsize=3)
    ax.set_xlabel(param)
    ax.set_ylabel(metric.replace("_", " "))
    fig.tight_layout()
    return _save(fig, path)
