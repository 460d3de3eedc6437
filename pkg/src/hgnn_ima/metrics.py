"""Single-label multiclass F1 scores."""
from __future__ import annotations

import numpy as np


def f1_scores(y_true, y_pred) -> tuple[float, float]:
    """(micro-F1, macro-F1).

    Micro-F1 equals accuracy for single-label data.  Macro-F1 averages the
    per-category F1 over categories that occur in the labels or the
    predictions; categories absent from both are left out of the mean.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise ValueError("cannot score an empty split")
    if y_true.shape != y_pred.shape:
        raise ValueError("labels and predictions differ in length")
    micro = float(np.mean(y_true == y_pred))
    f1s = []
    for c in np.union1d(y_true, y_pred):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        f1s.append(2 * tp / (2 * tp + fp + fn))
    return micro, float(np.mean(f1s))
