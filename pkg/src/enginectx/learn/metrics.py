"""Confusion matrices and one-vs-rest ROC / PR areas.

Confusion matrices are indexed [predicted, true]; the normalized view
divides each column (true class) by its support, so supported columns sum
to 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LearnError


def _sweep(scores: np.ndarray, positive: np.ndarray):
    """Cumulative (tp, fp) at each distinct threshold, highest first."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    p = positive[order]
    # last index of each group of tied scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(p)[ends].astype(np.float64)
    fp = (ends + 1) - tp
    return tp, fp


def roc_auc_binary(scores, positive) -> float:
    """ROC area by threshold sweep with tied scores grouped (trapezoids).

    NaN when either class is absent.
    """
    tp, fp = _sweep(scores, positive)
    n_pos, n_neg = tp[-1], fp[-1]
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def pr_auc_binary(scores, positive) -> float:
    """Average precision: sum over thresholds of recall gain times precision."""
    tp, fp = _sweep(scores, positive)
    n_pos = tp[-1]
    if n_pos == 0:
        return float("nan")
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def _macro(fn, proba: np.ndarray, y: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    per = np.array([fn(proba[:, c], y == c) for c in range(k)])
    ok = ~np.isnan(per)
    return (float(per[ok].mean()) if ok.any() else float("nan")), per


def confusion(y_true: np.ndarray, y_pred: np.ndarray, k: int) -> np.ndarray:
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (y_pred, y_true), 1)
    return m


def column_normalize(m: np.ndarray) -> np.ndarray:
    support = m.sum(axis=0, keepdims=True).astype(np.float64)
    return np.divide(m, support, out=np.zeros(m.shape), where=support > 0)


@dataclass(frozen=True)
class EvalReport:
    classes: tuple
    confusion: np.ndarray
    confusion_normalized: np.ndarray
    roc_auc: float
    pr_auc: float
    roc_auc_per_class: np.ndarray
    pr_auc_per_class: np.ndarray
    accuracy: float
    n: int

    def to_dict(self) -> dict:
        def clean(v):
            return None if np.isnan(v) else float(v)
        return {
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "confusion_normalized": [[float(v) for v in row] for row in self.confusion_normalized],
            "roc_auc": clean(self.roc_auc),
            "pr_auc": clean(self.pr_auc),
            "roc_auc_per_class": [clean(v) for v in self.roc_auc_per_class],
            "pr_auc_per_class": [clean(v) for v in self.pr_auc_per_class],
            "accuracy": float(self.accuracy),
            "n": self.n,
        }

    def format_table(self, digits: int = 2) -> str:
        """Column-normalized matrix: columns are true classes, rows predictions."""
        names = [str(c) for c in self.classes]
        width = max(max(len(n) for n in names), digits + 3) + 2
        head = "pred \\ true".ljust(width + 2) + "".join(n.rjust(width) for n in names)
        lines = [head]
        for i, n in enumerate(names):
            cells = "".join(f"{v:.{digits}f}".rjust(width) for v in self.confusion_normalized[i])
            lines.append(n.ljust(width + 2) + cells)
        lines.append(f"ROC-AUC {self.roc_auc:.{digits}f}  PR-AUC {self.pr_auc:.{digits}f}  "
                     f"accuracy {self.accuracy:.{digits}f}  n={self.n}")
        return "\n".join(lines)


def evaluate_proba(proba, labels, classes) -> EvalReport:
    """Report for precomputed class distributions (columns follow `classes`)."""
    proba = np.asarray(proba, dtype=np.float64)
    classes = tuple(classes)
    labels = [str(v) for v in labels]
    if len(labels) == 0:
        raise LearnError("empty evaluation set")
    if proba.shape != (len(labels), len(classes)):
        raise LearnError("score matrix shape does not match labels and classes")
    index = {c: i for i, c in enumerate(classes)}
    unknown = sorted(set(labels) - set(index))
    if unknown:
        raise LearnError(f"labels {unknown} are not in the model's classes")
    y = np.array([index[v] for v in labels], dtype=np.int64)
    pred = np.argmax(proba, axis=1)
    k = len(classes)
    cm = confusion(y, pred, k)
    roc, roc_per = _macro(roc_auc_binary, proba, y, k)
    pr, pr_per = _macro(pr_auc_binary, proba, y, k)
    return EvalReport(classes, cm, column_normalize(cm), roc, pr, roc_per, pr_per,
                      float(np.mean(pred == y)), len(labels))


def evaluate(model, rows, labels) -> EvalReport:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise LearnError("empty evaluation set")
    return evaluate_proba(model.predict_proba(rows), labels, model.classes)
