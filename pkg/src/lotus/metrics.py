"""ROC-AUC, shared by the meta-trainer and the evaluation harness."""

import numpy as np
from scipy.stats import rankdata


def roc_auc(scores, labels) -> float:
    """Mann-Whitney form of the ROC-AUC; tied scores get midranks.

    Parameters
    ----------
    scores : array (n,)
        Higher means more outlying.
    labels : array (n,)
        0/1, with 1 marking outliers; both classes must be present.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0/1")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain NaN or Inf")
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
