"""Classification and ranking metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata


class DegenerateLabels(ValueError):
    pass


def _binary_inputs(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return scores, labels.astype(bool)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate: P(s+ > s-) + 0.5 P(s+ = s-)."""
    scores, pos = _binary_inputs(scores, labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC-AUC needs both classes")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Average precision; tied scores form a single cut."""
    scores, pos = _binary_inputs(scores, labels)
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == len(pos):
        raise DegenerateLabels("PR-AUC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], pos[order]
    # last index of every run of equal scores
    cut = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tp = np.cumsum(y)[cut]
    seen = cut + 1
    precision = tp / seen
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(precision * recall_gain))


def confusion_metrics(scores, labels, threshold: float = 0.5) -> dict:
    """Precision, sensitivity, accuracy and F1 with ``score >= threshold`` as positive."""
    scores, pos = _binary_inputs(scores, labels)
    pred = scores >= threshold
    tp = int((pred & pos).sum())
    fp = int((pred & ~pos).sum())
    fn = int((~pred & pos).sum())
    tn = int((~pred & ~pos).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    sensitivity = tp / (tp + fn) if tp + fn else 0.0
    accuracy = (tp + tn) / len(pos) if len(pos) else 0.0
    f1 = 2 * precision * sensitivity / (precision + sensitivity) if precision + sensitivity else 0.0
    return {"precision": precision, "sensitivity": sensitivity, "accuracy": accuracy, "f1": f1}


def classification_report(scores, labels, threshold: float = 0.5) -> dict:
    out = {"roc_auc": roc_auc(scores, labels), "pr_auc": pr_auc(scores, labels)}
    out.update(confusion_metrics(scores, labels, threshold))
    return out


# -- ranking -----------------------------------------------------------------


def _ranking_inputs(truth, scores):
    truth = np.asarray(truth, dtype=np.float64)
    scores = np.asarray(scores, dtype=np.float64)
    if truth.shape != scores.shape or truth.ndim != 1:
        raise ValueError("truth and scores must be 1-d arrays of equal length")
    return truth, scores


def nci(truth, scores) -> float:
    """Fraction of truth-ordered pairs (i above j) with score_i <= score_j."""
    truth, scores = _ranking_inputs(truth, scores)
    if len(truth) < 2:
        raise ValueError("need at least two compounds")
    above = truth[:, None] > truth[None, :]
    n_pairs = int(above.sum())
    if n_pairs == 0:
        raise ValueError("no ordered pairs: all activities are equal")
    wrong = above & (scores[:, None] <= scores[None, :])
    return float(wrong.sum() / n_pairs)


def concordance_index(truth, scores) -> float:
    return 1.0 - nci(truth, scores)


def _resolve_k(n, k=None, percent=None):
    if (k is None) == (percent is None):
        raise ValueError("give exactly one of k or percent")
    if percent is not None:
        k = math.ceil(percent * n / 100.0)
    if k < 1 or k > n:
        raise ValueError(f"k={k} outside 1..{n}")
    return k


def _order(values):
    # descending; ties broken by index so results are deterministic
    return np.argsort(-np.asarray(values, dtype=np.float64), kind="mergesort")


def recall_at(truth, scores, k=None, percent=None) -> float:
    truth, scores = _ranking_inputs(truth, scores)
    k = _resolve_k(len(truth), k, percent)
    top_pred = set(_order(scores)[:k].tolist())
    top_true = set(_order(truth)[:k].tolist())
    return len(top_pred & top_true) / k


def ndcg_at(truth, scores, k=None, percent=None) -> float:
    """NDCG with gain ``n - true_rank`` (best compound n-1, worst 0)."""
    truth, scores = _ranking_inputs(truth, scores)
    n = len(truth)
    k = _resolve_k(n, k, percent)
    true_order = _order(truth)
    gain = np.empty(n)
    gain[true_order] = n - 1 - np.arange(n)
    discount = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float(np.sum(gain[_order(scores)[:k]] * discount))
    idcg = float(np.sum(gain[true_order[:k]] * discount))
    return dcg / idcg if idcg > 0 else 0.0


def ranking_report(truth, scores, ks=(3, 5, 10), percents=(5, 10)) -> dict:
    n = len(truth)
    out = {"ci": concordance_index(truth, scores)}
    for k in ks:
        if k <= n:
            out[f"recall@{k}"] = recall_at(truth, scores, k=k)
            out[f"ndcg@{k}"] = ndcg_at(truth, scores, k=k)
    for p in percents:
        out[f"recall@{p}%"] = recall_at(truth, scores, percent=p)
        out[f"ndcg@{p}%"] = ndcg_at(truth, scores, percent=p)
    return out
