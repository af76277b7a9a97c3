"""Classification metrics: top-1 accuracy and macro-averaged F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ClassStats:
    label: int
    precision: float
    recall: float
    f1: float


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class: list
    confusion: np.ndarray  # [true, pred] counts


def evaluate(preds, labels, class_count: int) -> MetricsReport:
    """Confusion-matrix metrics; degenerate classes score F1 = 0.

    Per-class precision is TP/(TP+FP) and recall TP/(TP+FN), each 0 when the
    denominator vanishes; F1 is their harmonic mean, and the macro score is
    the unweighted mean over all classes.
    """
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise ValueError(
            f"preds {preds.shape} and labels {labels.shape} must be equal-length 1-D")
    if preds.size == 0:
        raise ValueError("cannot evaluate an empty prediction vector")
    for name, arr in (("preds", preds), ("labels", labels)):
        if arr.min() < 0 or arr.max() >= class_count:
            raise ValueError(f"{name} outside [0, {class_count})")

    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (labels, preds), 1)

    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    per_class = []
    f1_sum = 0.0
    for c in range(class_count):
        tp = float(confusion[c, c])
        fp = float(confusion[:, c].sum()) - tp
        fn = float(confusion[c, :].sum()) - tp
        precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
        recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
        f1 = (2.0 * precision * recall / (precision + recall)
              if (precision + recall) > 0 else 0.0)
        per_class.append(ClassStats(c, precision, recall, f1))
        f1_sum += f1
    return MetricsReport(accuracy=accuracy, macro_f1=f1_sum / class_count,
                         per_class=per_class, confusion=confusion)
