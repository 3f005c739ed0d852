"""Evaluation metrics: confusion matrices, F1, quadratic kappa and ROC analysis."""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from core.errors import DataError


def confusion_matrix(references, predictions, num_classes):
    """Rows are reference labels, columns predictions."""
    references = np.asarray(references, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if references.shape != predictions.shape:
        raise DataError("reference and prediction sequences differ in length")
    if references.size == 0:
        raise DataError("cannot evaluate an empty label sequence")
    if references.min() < 0 or predictions.min() < 0 or max(references.max(), predictions.max()) >= num_classes:
        raise DataError(f"labels must lie in [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (references, predictions), 1)
    return cm


def _safe_ratio(num, den):
    return float(num / den) if den else 0.0


def classification_report(references, predictions, num_classes, class_names=None):
    cm = confusion_matrix(references, predictions, num_classes)
    names = list(class_names) if class_names else [str(c) for c in range(num_classes)]
    total = cm.sum()
    per_class = {}
    for c, name in enumerate(names):
        tp = cm[c, c]
        fn = cm[c].sum() - tp
        fp = cm[:, c].sum() - tp
        tn = total - tp - fn - fp
        precision = _safe_ratio(tp, tp + fp)
        sensitivity = _safe_ratio(tp, tp + fn)
        if tp + fn + fp == 0:
            warnings.warn(f"class {name} is absent from references and predictions; F1 set to 0")
        f1 = _safe_ratio(2 * precision * sensitivity, precision + sensitivity)
        per_class[name] = {"precision": precision, "sensitivity": sensitivity,
                           "specificity": _safe_ratio(tn, tn + fp), "f1": f1, "support": int(cm[c].sum())}
    return {
        "accuracy": _safe_ratio(np.trace(cm), total),
        "macro_f1": float(np.mean([v["f1"] for v in per_class.values()])),
        "per_class": per_class,
        "confusion": cm,
    }


def quadratic_kappa(cm):
    """Cohen's kappa with quadratic disagreement weights (i - j)^2 / (C - 1)^2."""
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] < 2:
        raise DataError("kappa needs a square confusion matrix with at least two classes")
    total = cm.sum()
    if total <= 0:
        raise DataError("kappa needs a non-empty confusion matrix")
    size = cm.shape[0]
    idx = np.arange(size)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (size - 1) ** 2
    expected = np.outer(cm.sum(axis=1), cm.sum(axis=0)) / total
    observed_disagreement = (weights * cm).sum()
    expected_disagreement = (weights * expected).sum()
    if expected_disagreement == 0:
        if observed_disagreement == 0:
            return 1.0
        raise DataError("kappa undefined: zero expected disagreement")
    return float(1.0 - observed_disagreement / expected_disagreement)


def kappa_from_labels(references, predictions, categories):
    """Quadratic kappa over an ordered category list (e.g. combined Gleason scores)."""
    lookup = {value: i for i, value in enumerate(categories)}
    try:
        refs = [lookup[v] for v in references]
        preds = [lookup[v] for v in predictions]
    except KeyError as exc:
        raise DataError(f"value {exc.args[0]} is not one of the categories {list(categories)}") from None
    return quadratic_kappa(confusion_matrix(refs, preds, len(categories)))


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def frame(self):
        return pd.DataFrame({"threshold": self.thresholds, "fpr": self.fpr, "tpr": self.tpr})


def _binary_inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be equal-length 1-D sequences")
    if labels.all() or not labels.any():
        raise DataError("ROC analysis needs both positive and negative labels")
    return scores, labels


def roc_auc(scores, labels):
    """ROC curve over unique score thresholds (positive iff score > t) and its trapezoidal area."""
    scores, labels = _binary_inputs(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # last index of each run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(sorted_scores)), sorted_scores.size - 1]
    tp = np.cumsum(sorted_labels)[ends]
    fp = np.cumsum(~sorted_labels)[ends]
    tpr = np.r_[0.0, tp / labels.sum()]
    fpr = np.r_[0.0, fp / (~labels).sum()]
    # point k keeps scores strictly above thresholds[k]
    thresholds = np.r_[sorted_scores[ends], -np.inf]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, thresholds, auc)


def mann_whitney_auc(scores, labels):
    """Rank-sum AUC; tied pairs count one half."""
    scores, labels = _binary_inputs(scores, labels)
    ranks = rankdata(scores)
    n_pos = labels.sum()
    n_neg = labels.size - n_pos
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def binary_report(scores, labels, threshold=0.5):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    predicted = scores > threshold
    tp = int(np.sum(predicted & labels))
    tn = int(np.sum(~predicted & ~labels))
    fp = int(np.sum(predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    return {"accuracy": _safe_ratio(tp + tn, labels.size), "sensitivity": _safe_ratio(tp, tp + fn),
            "specificity": _safe_ratio(tn, tn + fp)}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_metrics(metrics, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(metrics), indent=2, sort_keys=True))
    return path


def write_confusion(cm, class_names, path):
    frame = pd.DataFrame(np.asarray(cm), index=list(class_names), columns=list(class_names))
    frame.index.name = "reference"
    frame.to_csv(path)
    return path
