"""Evaluation metrics: one-vs-rest AUC, TPR at a target false-positive
rate, and the thresholded confusion matrix with a below-threshold column.

The positive class of interest is failed_interruption throughout the
shipped tooling, but every function takes the class name explicitly.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateDistributionError, MetricError
from .model import CLASSES

BELOW_THRESHOLD = "below_threshold"


@dataclass(frozen=True)
class ScoredSample:
    clip_id: str
    true_label: str
    probs: tuple

    def __post_init__(self):
        if self.true_label not in CLASSES:
            raise MetricError("unknown class %r" % self.true_label)
        p = np.asarray(self.probs, dtype=np.float64)
        if p.shape != (len(CLASSES),):
            raise MetricError("probs must have length %d" % len(CLASSES))
        if abs(float(p.sum()) - 1.0) > 1e-6:
            raise MetricError("probs of %s sum to %g, not 1" % (self.clip_id, p.sum()))
        object.__setattr__(self, "probs", tuple(float(x) for x in p))


def _scores_and_truth(samples, positive_class: str):
    if positive_class not in CLASSES:
        raise MetricError("unknown class %r" % positive_class)
    idx = CLASSES.index(positive_class)
    scores = np.array([s.probs[idx] for s in samples], dtype=np.float64)
    truth = np.array([s.true_label == positive_class for s in samples])
    return scores, truth, idx


def roc_auc(samples, positive_class: str) -> float:
    """One-vs-rest AUC by the rank method; ties contribute 0.5.

    Equals the brute-force count of concordant pairs divided by the
    number of positive-negative pairs.
    """
    scores, truth, _ = _scores_and_truth(samples, positive_class)
    n_pos = int(truth.sum())
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDistributionError(
            "AUC needs both classes; got %d positives, %d negatives" % (n_pos, n_neg))
    ranks = rankdata(scores)  # average ranks on ties
    return float((ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _emitted(scores, argmax_is_pos, tau) -> np.ndarray:
    """A sample counts as a positive prediction only when the positive
    class wins the argmax and clears the threshold."""
    return argmax_is_pos & (scores >= tau)


def tpr_at_fpr(samples, positive_class: str, target_fpr: float = 0.01):
    """Pick the smallest observed-score threshold whose FPR is within
    target, then report TPR there. Returns (tpr, threshold).

    FPR counts a false positive only for emitted predictions (argmax =
    positive class and score >= threshold). If even the largest score
    overshoots the target, the threshold is +inf and TPR is 0.
    """
    if not 0 < target_fpr < 1:
        raise MetricError("target_fpr must be in (0, 1)")
    scores, truth, idx = _scores_and_truth(samples, positive_class)
    n_pos = int(truth.sum())
    n_neg = len(samples) - n_pos
    if n_neg == 0:
        raise DegenerateDistributionError("no negatives; FPR undefined")
    if n_neg < math.ceil(1.0 / target_fpr):
        warnings.warn(
            "only %d negatives for a %.4g FPR target; the realized FPR is "
            "coarse" % (n_neg, target_fpr), stacklevel=2)

    argmax_is_pos = np.array(
        [int(np.argmax(s.probs)) == idx for s in samples])
    best = None
    for tau in sorted(set(scores.tolist())):
        emitted = _emitted(scores, argmax_is_pos, tau)
        fpr = float((emitted & ~truth).sum()) / n_neg
        if fpr <= target_fpr:
            best = tau
            break  # ascending scan: first hit is the smallest threshold
    if best is None:
        return 0.0, float("inf")
    emitted = _emitted(scores, argmax_is_pos, best)
    tpr = float((emitted & truth).sum()) / n_pos if n_pos else 0.0
    return tpr, float(best)


@dataclass(frozen=True)
class ThresholdedConfusion:
    counts: tuple  # 4 rows x 5 columns, row-major
    threshold: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.int64).reshape(len(CLASSES), len(CLASSES) + 1)

    @property
    def total(self) -> int:
        return int(self.matrix.sum())


def thresholded_confusion(samples, tau: float, positive_class: str = "failed_interruption") -> ThresholdedConfusion:
    """Confusion counts with the below-threshold column: a prediction
    whose argmax is the positive class but whose score falls under tau
    lands in the extra column instead."""
    pos_idx = CLASSES.index(positive_class)
    mat = np.zeros((len(CLASSES), len(CLASSES) + 1), dtype=np.int64)
    for s in samples:
        row = CLASSES.index(s.true_label)
        pred = int(np.argmax(s.probs))
        if pred == pos_idx and s.probs[pos_idx] < tau:
            mat[row, len(CLASSES)] += 1
        else:
            mat[row, pred] += 1
    return ThresholdedConfusion(tuple(int(x) for x in mat.ravel()), float(tau))


def per_class_report(confusion: ThresholdedConfusion) -> dict:
    """Precision and recall per class from the thresholded confusion.

    The below-threshold column never counts as a predicted positive;
    recall denominators are full row sums. Empty denominators give 0.
    """
    mat = confusion.matrix
    report = {}
    for i, name in enumerate(CLASSES):
        col = int(mat[:, i].sum())
        row = int(mat[i, :].sum())
        report[name] = {
            "precision": mat[i, i] / col if col else 0.0,
            "recall": mat[i, i] / row if row else 0.0,
            "support": row,
        }
    return report


def roc_points(samples, positive_class: str):
    """Score-ranked ROC curve as (fpr, tpr, threshold) rows, threshold
    descending from +inf; consistent with roc_auc, not with the
    emission rule of tpr_at_fpr."""
    scores, truth, _ = _scores_and_truth(samples, positive_class)
    n_pos = int(truth.sum())
    n_neg = len(samples) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDistributionError("ROC needs both classes")
    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    for k, i in enumerate(order):
        if truth[i]:
            tp += 1
        else:
            fp += 1
        # emit a vertex only after the last sample of a tied score group
        if k + 1 < len(order) and scores[order[k + 1]] == scores[i]:
            continue
        points.append((fp / n_neg, tp / n_pos, float(scores[i])))
    return points


def accuracy(samples) -> float:
    if not samples:
        raise MetricError("empty sample list")
    hits = sum(1 for s in samples if CLASSES[int(np.argmax(s.probs))] == s.true_label)
    return hits / len(samples)


def write_roc_csv(path, points) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr", "threshold"])
        for fpr, tpr, thr in points:
            writer.writerow(["%.10g" % fpr, "%.10g" % tpr, "%.10g" % thr])


def write_confusion_csv(path, confusion: ThresholdedConfusion) -> None:
    mat = confusion.matrix
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true_label"] + list(CLASSES) + [BELOW_THRESHOLD])
        for i, name in enumerate(CLASSES):
            writer.writerow([name] + [int(x) for x in mat[i]])


def write_report_csv(path, report: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "precision", "recall", "support"])
        for name in CLASSES:
            row = report[name]
            writer.writerow([name, "%.10g" % row["precision"],
                             "%.10g" % row["recall"], row["support"]])
