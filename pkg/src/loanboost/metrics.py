"""Confusion-matrix metrics and ROC analysis for binary labels."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int
    positive_label: int = 1

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def swapped(self) -> "ConfusionMatrix":
        """Same predictions viewed with the other class as positive."""
        return ConfusionMatrix(self.tn, self.tp, self.fn, self.fp, 1 - self.positive_label)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def _check_pair(y_true, other):
    y_true = np.asarray(y_true)
    other = np.asarray(other)
    if y_true.shape != other.shape or y_true.ndim != 1:
        raise ValueError("inputs must be 1-D arrays of equal length")
    if y_true.size == 0:
        raise ValueError("inputs must be non-empty")
    return y_true, other


def confusion_matrix(y_true, y_pred, positive_label: int = 1) -> ConfusionMatrix:
    y_true, y_pred = _check_pair(y_true, y_pred)
    pos_t = y_true == positive_label
    pos_p = y_pred == positive_label
    return ConfusionMatrix(
        tp=int(np.sum(pos_t & pos_p)),
        tn=int(np.sum(~pos_t & ~pos_p)),
        fp=int(np.sum(~pos_t & pos_p)),
        fn=int(np.sum(pos_t & ~pos_p)),
        positive_label=positive_label,
    )


def scalar_metrics(cm: ConfusionMatrix) -> dict[str, float]:
    """Accuracy, precision, recall and F1.

    Undefined ratios (no predicted or no actual positives) are reported as 0.
    """
    if cm.total < 1:
        raise ValueError("confusion matrix is empty")
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": accuracy, "precision": precision, "recall": recall, "f1": f1}


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["fpr", "tpr"])
            for x, y in self.points:
                writer.writerow([repr(x), repr(y)])


def _binary_targets(y_true, scores, positive_label):
    y_true, scores = _check_pair(y_true, scores)
    pos = y_true == positive_label
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC analysis needs both classes present")
    return pos, np.asarray(scores, dtype=float), n_pos, n_neg


def roc_curve(y_true, scores, positive_label: int = 1) -> RocCurve:
    """ROC polyline over descending score thresholds with trapezoidal AUC.

    Rows with tied scores enter together, producing one diagonal segment.
    """
    pos, scores, n_pos, n_neg = _binary_targets(y_true, scores, positive_label)
    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    # last row of each block of equal scores
    ends = np.append(np.flatnonzero(s[1:] != s[:-1]), s.size - 1)
    tp_counts = np.concatenate([[0], tp[ends]])
    fp_counts = np.concatenate([[0], fp[ends]])
    # trapezoids in integer counts, normalized once at the end
    area = np.sum(np.diff(fp_counts) * (tp_counts[1:] + tp_counts[:-1])) / 2.0
    auc = float(area / (n_pos * n_neg))
    fpr = fp_counts / n_neg
    tpr = tp_counts / n_pos
    return RocCurve(fpr, tpr, auc)


def auc_concordance_oracle(y_true, scores, positive_label: int = 1) -> float:
    """Pairwise AUC: fraction of (negative, positive) pairs ordered correctly, ties 0.5."""
    pos, scores, n_pos, n_neg = _binary_targets(y_true, scores, positive_label)
    sp = scores[pos][:, None]
    sn = scores[~pos][None, :]
    wins = np.sum(sp > sn) + 0.5 * np.sum(sp == sn)
    return float(wins / (n_pos * n_neg))


def evaluate(y_true, proba_good, positive_label: int = 0, threshold: float = 0.5) -> dict:
    """All metrics for good-class probabilities ``proba_good``.

    Rows with ``proba_good >= threshold`` are predicted good (1). Scores for
    the ROC analysis rank rows by the probability of ``positive_label``.
    """
    y_true = np.asarray(y_true)
    proba_good = np.asarray(proba_good, dtype=float)
    y_pred = (proba_good >= threshold).astype(np.int64)
    cm = confusion_matrix(y_true, y_pred, positive_label)
    out = {"confusion_matrix": cm.to_dict(), **scalar_metrics(cm)}
    scores = proba_good if positive_label == 1 else -proba_good
    try:
        out["auc"] = roc_curve(y_true, scores, positive_label).auc
    except ValueError:
        out["auc"] = None
    out["positive_label"] = "good" if positive_label == 1 else "bad"
    return out
