"""Confusion matrix, accuracy and macro-averaged F1."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


class EmptyEvaluationError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(preds, labels, n_classes: int, class_names=None) -> ConfusionMatrix:
    preds = np.asarray(preds, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if preds.shape != labels.shape:
        raise ValueError(f"length mismatch: {preds.size} predictions vs {labels.size} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} outside 0..{n_classes - 1}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (labels, preds), 1)
    names = list(class_names) if class_names is not None else [str(c) for c in range(n_classes)]
    return ConfusionMatrix(counts, names)


def _counts(m) -> np.ndarray:
    counts = np.asarray(m.counts if isinstance(m, ConfusionMatrix) else m, dtype=np.float64)
    if counts.sum() <= 0:
        raise EmptyEvaluationError("confusion matrix is empty")
    return counts


def accuracy(m) -> float:
    counts = _counts(m)
    return float(np.trace(counts) / counts.sum())


def per_class_f1(m) -> np.ndarray:
    """F1 per class; any 0/0 precision, recall or F1 counts as 0."""
    counts = _counts(m)
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(m) -> float:
    """Unweighted mean of per-class F1 over every configured class."""
    return float(per_class_f1(m).mean())


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    per_class_f1: list[float]
    confusion: list[list[int]]

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_f1": self.macro_f1,
                "per_class_f1": list(self.per_class_f1), "confusion": self.confusion}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(float(d["accuracy"]), float(d["macro_f1"]),
                   [float(x) for x in d["per_class_f1"]],
                   [[int(x) for x in row] for row in d["confusion"]])

    def percent(self) -> str:
        return f"{100 * self.accuracy:.2f}"


def evaluate(preds, labels, n_classes: int) -> MetricsReport:
    cm = confusion(preds, labels, n_classes)
    return MetricsReport(accuracy(cm), macro_f1(cm), per_class_f1(cm).tolist(),
                         cm.counts.tolist())
