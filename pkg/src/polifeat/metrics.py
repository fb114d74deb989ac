"""Evaluation metrics shared by the learners."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def auc(scores, labels) -> float | None:
    """ROC AUC as the Mann-Whitney rank statistic; ties get average ranks.

    Returns None when only one class is present.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def accuracy(probs, labels, threshold: float = 0.5) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.size == 0:
        return float("nan")
    return float(np.mean((probs >= threshold) == (labels == 1)))


def mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    return float(np.mean((pred - np.asarray(target, dtype=np.float64)) ** 2))
