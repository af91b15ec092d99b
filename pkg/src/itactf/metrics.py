"""Imbalance-robust classification metrics built on a confusion matrix."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import DimensionError, DomainError, UndefinedMetricError

__all__ = [
    "ConfusionMatrix",
    "confusion_matrix",
    "balanced_accuracy",
    "weighted_f1",
    "mmae",
    "per_class_report",
    "evaluate",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[t, p]`` is the number of samples of true class t predicted as p."""

    counts: np.ndarray

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support(self):
        return self.counts.sum(axis=1)

    @property
    def predicted(self):
        return self.counts.sum(axis=0)

    @property
    def correct(self):
        return np.diag(self.counts)

    def recall(self):
        support = self.support
        self._require_support(support)
        return self.correct / support

    def precision(self):
        predicted = self.predicted
        return np.divide(self.correct, predicted, out=np.zeros(self.num_classes), where=predicted > 0)

    def f1(self):
        support = self.support
        precision = self.precision()
        recall = np.divide(self.correct, support, out=np.zeros(self.num_classes), where=support > 0)
        denom = precision + recall
        if np.any(denom == 0):
            warnings.warn("F1 is ill-defined for classes with zero precision and recall; set to 0.0", RuntimeWarning)
        return np.divide(2 * precision * recall, denom, out=np.zeros(self.num_classes), where=denom > 0)

    def _require_support(self, support):
        missing = np.flatnonzero(support == 0)
        if missing.size:
            raise UndefinedMetricError(f"classes with no true samples: {missing.tolist()}", missing.tolist())


def _labels(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise DimensionError(f"{y_true.size} true labels but {y_pred.size} predictions")
    if y_true.size == 0:
        raise DomainError("no labels to evaluate")
    return y_true, y_pred


def confusion_matrix(y_true, y_pred, num_classes=None) -> ConfusionMatrix:
    y_true, y_pred = _labels(y_true, y_pred)
    if num_classes is None:
        num_classes = int(max(y_true.max(), y_pred.max())) + 1
    if min(y_true.min(), y_pred.min()) < 0 or max(y_true.max(), y_pred.max()) >= num_classes:
        raise DomainError(f"labels must lie in 0..{num_classes - 1}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def balanced_accuracy(y_true, y_pred, num_classes=None) -> float:
    """Mean per-class recall; every class must occur in ``y_true``."""
    return float(np.mean(confusion_matrix(y_true, y_pred, num_classes).recall()))


def weighted_f1(y_true, y_pred, num_classes=None) -> float:
    """Support-weighted mean of per-class F1 (0 where precision + recall is 0)."""
    cm = confusion_matrix(y_true, y_pred, num_classes)
    cm._require_support(cm.support)
    return float(np.sum(cm.support / cm.total * cm.f1()))


def mmae(y_true, y_pred, classes=None) -> float:
    """Macro-averaged mean absolute error for ordinal labels.

    ``classes`` is an int P (classes ``0..P-1``) or an explicit sequence; by
    default the distinct values of ``y_true`` are used.
    """
    y_true, y_pred = _labels(y_true, y_pred)
    if classes is None:
        classes = np.unique(y_true)
    elif np.isscalar(classes):
        classes = np.arange(int(classes))
    classes = np.asarray(classes)
    empty = [int(c) for c in classes if not np.any(y_true == c)]
    if empty:
        raise UndefinedMetricError(f"classes with no true samples: {empty}", empty)
    errors = np.abs(y_true - y_pred).astype(np.float64)
    return float(np.mean([errors[y_true == c].mean() for c in classes]))


def per_class_report(cm: ConfusionMatrix, class_names=None) -> Dict[str, Dict[str, float]]:
    names = class_names or [str(p) for p in range(cm.num_classes)]
    support = cm.support
    recall = np.divide(cm.correct, support, out=np.zeros(cm.num_classes), where=support > 0)
    precision = cm.precision()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        f1 = cm.f1()
    return {
        names[p]: {
            "support": int(support[p]),
            "recall": float(recall[p]),
            "precision": float(precision[p]),
            "f1": float(f1[p]),
        }
        for p in range(cm.num_classes)
    }


def evaluate(y_true, y_pred, num_classes=None, ordinal=False, class_names=None) -> Dict[str, object]:
    """Flat metric record plus per-class breakdown and confusion counts."""
    cm = confusion_matrix(y_true, y_pred, num_classes)
    record: Dict[str, object] = {
        "n": cm.total,
        "balanced_accuracy": balanced_accuracy(y_true, y_pred, cm.num_classes),
        "weighted_f1": weighted_f1(y_true, y_pred, cm.num_classes),
        "accuracy": float(cm.correct.sum() / cm.total),
    }
    if ordinal:
        record["mmae"] = mmae(y_true, y_pred, cm.num_classes)
    record["per_class"] = per_class_report(cm, class_names)
    record["confusion"] = cm.counts.tolist()
    return record
