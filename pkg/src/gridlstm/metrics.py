"""Classification metrics: confusion counts, per-class scores, ROC/AUC.

Metrics whose denominator is zero are reported as None (undefined), not
silently 0; macro averages run over the defined classes only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, UndefinedMetricError

METRIC_NAMES = ("accuracy", "sensitivity", "specificity", "f1")


@dataclass
class ConfusionCounts:
    """One-vs-rest confusion counts per class."""
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray

    def __post_init__(self):
        for arr in (self.tp, self.fp, self.tn, self.fn):
            if np.any(np.asarray(arr) < 0):
                raise ValueError("confusion counts cannot be negative")
        self.tp = np.asarray(self.tp, dtype=np.int64)
        self.fp = np.asarray(self.fp, dtype=np.int64)
        self.tn = np.asarray(self.tn, dtype=np.int64)
        self.fn = np.asarray(self.fn, dtype=np.int64)

    @property
    def classes(self) -> int:
        return len(self.tp)

    @property
    def total(self) -> int:
        return int(self.tp[0] + self.fp[0] + self.tn[0] + self.fn[0]) if self.classes else 0

    @classmethod
    def from_pairs(cls, labels, predictions, classes: int) -> "ConfusionCounts":
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.asarray(predictions, dtype=np.int64)
        if labels.shape != predictions.shape:
            raise ShapeError("labels and predictions must have equal length")
        tp = np.zeros(classes, dtype=np.int64)
        fp = np.zeros(classes, dtype=np.int64)
        tn = np.zeros(classes, dtype=np.int64)
        fn = np.zeros(classes, dtype=np.int64)
        for c in range(classes):
            is_c = labels == c
            said_c = predictions == c
            tp[c] = np.sum(is_c & said_c)
            fp[c] = np.sum(~is_c & said_c)
            fn[c] = np.sum(is_c & ~said_c)
            tn[c] = np.sum(~is_c & ~said_c)
        return cls(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num, den):
    return float(num) / float(den) if den > 0 else None


def metric_summary(counts: ConfusionCounts) -> dict:
    """Per-class and macro-averaged accuracy/sensitivity/specificity/F1.

    Returns {"per_class": [ {metric: value|None} ... ],
             "macro": {metric: value|None}, "overall_accuracy": float}.
    """
    per_class = []
    for c in range(counts.classes):
        tp, fp, tn, fn = (int(counts.tp[c]), int(counts.fp[c]),
                          int(counts.tn[c]), int(counts.fn[c]))
        per_class.append({
            "accuracy": _ratio(tp + tn, tp + fp + tn + fn),
            "sensitivity": _ratio(tp, tp + fn),
            "specificity": _ratio(tn, tn + fp),
            "f1": _ratio(2 * tp, 2 * tp + fp + fn),
        })
    macro = {}
    for name in METRIC_NAMES:
        defined = [m[name] for m in per_class if m[name] is not None]
        macro[name] = float(np.mean(defined)) if defined else None
    overall = _ratio(int(counts.tp.sum()), counts.total)
    return {"per_class": per_class, "macro": macro, "overall_accuracy": overall}


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average rank of their group."""
    _, inverse, group_counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(group_counts)
    avg = ends - (group_counts - 1) / 2.0
    return avg[inverse]


def auc_score(scores, positives) -> float:
    """One-vs-rest AUC by the rank-sum statistic with tie correction.

    Equals the trapezoidal area under the empirical ROC curve.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ShapeError("scores and positives must be equal-length 1-D arrays")
    n_pos = int(positives.sum())
    n_neg = int(positives.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = _average_ranks(scores)
    rank_sum = float(ranks[positives].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_per_class(scores, labels):
    """Per-class one-vs-rest AUC from a score matrix (n, classes).

    Classes without both a positive and a negative sample come back as
    None.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.shape[0]:
        raise ShapeError("scores must be (n, classes) aligned with labels")
    out = []
    for c in range(scores.shape[1]):
        positives = labels == c
        try:
            out.append(auc_score(scores[:, c], positives))
        except UndefinedMetricError:
            out.append(None)
    return out


def roc_points(scores, positives):
    """Empirical ROC curve points (fpr, tpr), threshold-descending,
    starting at (0, 0); tied scores collapse into one point."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = int(positives.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_pos = positives[order].astype(np.float64)
    cum_tp = np.cumsum(sorted_pos)
    cum_fp = np.cumsum(1.0 - sorted_pos)
    # keep only the last index of each tied-score run
    keep = np.r_[sorted_scores[1:] != sorted_scores[:-1], True]
    tpr = np.r_[0.0, cum_tp[keep] / n_pos]
    fpr = np.r_[0.0, cum_fp[keep] / n_neg]
    return fpr, tpr
