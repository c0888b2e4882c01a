"""Confusion matrices and macro-averaged classification metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, DimensionError
from .training import cross_entropy


@dataclass(frozen=True)
class Metrics:
    loss: float
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def confusion(y_true, y_pred, num_classes: int) -> np.ndarray:
    """``cm[t, p]`` counts samples of true class ``t`` predicted as ``p``."""
    y_true = np.asarray(y_true, dtype=np.int64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.int64).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionError("y_true and y_pred lengths differ", y_true.shape, y_pred.shape)
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise DataError(f"{name} contains a class outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def per_class_scores(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cm = np.asarray(cm)
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_div(tp, cm.sum(axis=0).astype(np.float64))
    recall = _safe_div(tp, cm.sum(axis=1).astype(np.float64))
    f1 = _safe_div(2 * precision * recall, precision + recall)
    return precision, recall, f1


def classification_metrics(cm: np.ndarray) -> tuple[float, float, float, float]:
    """Accuracy and macro precision, recall and F1.

    Classes with an empty denominator score 0, and they still count toward
    the macro mean.
    """
    cm = np.asarray(cm)
    total = cm.sum()
    if total <= 0:
        raise DataError("metrics need at least one sample")
    precision, recall, f1 = per_class_scores(cm)
    accuracy = np.trace(cm) / total
    return float(accuracy), float(precision.mean()), float(recall.mean()), float(f1.mean())


def predict(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties.
    return np.argmax(np.asarray(logits), axis=1)


def compute_metrics(model, params, features: np.ndarray, labels) -> Metrics:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise DataError("cannot compute metrics on an empty dataset")
    logits = model.forward(params, features, training=False)
    loss = float(cross_entropy(logits, labels).value)
    cm = confusion(labels, predict(logits.value), model.num_classes)
    return Metrics(loss, *classification_metrics(cm))
