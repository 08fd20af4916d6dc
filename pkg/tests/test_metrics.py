import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from molxfer.metrics import (
    DegenerateLabels,
    classification_report,
    concordance_index,
    confusion_metrics,
    ndcg_at,
    nci,
    pr_auc,
    ranking_report,
    recall_at,
    roc_auc,
)


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def brute_nci(truth, scores):
    pairs = [(i, j) for i in range(len(truth)) for j in range(len(truth)) if truth[i] > truth[j]]
    return sum(scores[i] <= scores[j] for i, j in pairs) / len(pairs)


def test_roc_examples():
    assert roc_auc([0.9, 0.1], [1, 0]) == 1.0
    assert roc_auc([0.3] * 4, [1, 0, 1, 0]) == 0.5
    assert roc_auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5
    with pytest.raises(DegenerateLabels):
        roc_auc([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 1)), min_size=2, max_size=12))
def test_roc_equals_brute_force(data):
    scores = [s / 4 for s, _ in data]
    labels = [y for _, y in data]
    if len(set(labels)) < 2:
        return
    assert roc_auc(scores, labels) == brute_auc(scores, labels)


@given(st.lists(st.integers(-50, 50), min_size=4, max_size=10), st.integers(0, 10**6))
def test_roc_and_nci_invariant_to_monotone_transform(scores, seed):
    labels = np.random.default_rng(seed).integers(0, 2, size=len(scores))
    labels[0], labels[1] = 0, 1
    s = np.array(scores, dtype=float)
    t = s**3 + 2 * s  # strictly increasing and exact on these integers
    assert roc_auc(s, labels) == roc_auc(t, labels)
    truth = np.arange(len(s), dtype=float)
    assert nci(truth, s) == nci(truth, t)


def test_pr_examples():
    assert pr_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert pr_auc([0.9, 0.8, 0.7, 0.1], [0, 0, 0, 1]) == pytest.approx(1 / 4, abs=1e-12)
    assert pr_auc([0.9, 0.8, 0.3], [1, 0, 1]) == pytest.approx(0.5 * (1 + 2 / 3), abs=1e-12)
    # a tie group is one cut: both items enter together
    assert pr_auc([0.5, 0.5], [1, 0]) == 0.5


def test_confusion_examples():
    assert confusion_metrics([0.9, 0.1], [1, 0]) == {"precision": 1.0, "sensitivity": 1.0, "accuracy": 1.0, "f1": 1.0}
    m = confusion_metrics([0.1, 0.2], [1, 0])
    assert m["precision"] == 0 and m["sensitivity"] == 0 and m["f1"] == 0 and m["accuracy"] == 0.5
    m = confusion_metrics([0.9, 0.8, 0.1, 0.2], [1, 0, 1, 0])
    assert m == {"precision": 0.5, "sensitivity": 0.5, "accuracy": 0.5, "f1": 0.5}
    assert set(classification_report([0.9, 0.1], [1, 0])) == {
        "roc_auc", "pr_auc", "precision", "sensitivity", "accuracy", "f1"
    }


def test_nci_examples():
    truth = [3.0, 2.0, 1.0]
    assert nci(truth, [3, 2, 1]) == 0.0
    assert nci(truth, [1, 2, 3]) == 1.0
    assert nci(truth, [0.2, 0.5, 0.1]) == pytest.approx(1 / 3)
    assert nci(truth, [1, 1, 1]) == 1.0  # ties count as wrong
    with pytest.raises(ValueError):
        nci([1.0], [1.0])


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3)), min_size=2, max_size=12))
def test_nci_equals_brute_force(data):
    truth = [t for t, _ in data]
    scores = [s for _, s in data]
    if len(set(truth)) < 2:
        return
    assert nci(truth, scores) == brute_nci(truth, scores)
    assert nci(truth, scores) + concordance_index(truth, scores) == 1.0


def test_recall_and_ndcg_examples():
    truth = [3.0, 2.0, 1.0]  # a, b, c
    scores = [2.0, 3.0, 1.0]  # b, a, c
    assert recall_at(truth, scores, k=2) == 1.0
    expected = (1 * 1 + 2 / math.log2(3)) / (2 * 1 + 1 / math.log2(3))
    assert ndcg_at(truth, scores, k=2) == pytest.approx(expected, abs=1e-12)
    assert ndcg_at(truth, truth, k=3) == 1.0
    assert recall_at(truth, [1, 2, 3], k=3) == 1.0
    with pytest.raises(ValueError):
        recall_at(truth, scores, k=4)


def test_percent_k():
    truth = np.arange(20.0)
    assert recall_at(truth, truth, percent=5) == 1.0  # k = 1
    assert recall_at(truth, -truth, percent=10) == 0.0  # k = 2


@given(st.permutations(list(range(8))), st.integers(1, 8))
def test_ndcg_bounds(perm, k):
    truth = np.arange(8.0)
    v = ndcg_at(truth, np.array(perm, dtype=float), k=k)
    assert 0.0 <= v <= 1.0 + 1e-12


def test_ranking_report_keys():
    rep = ranking_report(np.arange(30.0), np.arange(30.0))
    assert rep["ci"] == 1.0
    assert all(v == 1.0 for v in rep.values())
    assert {"recall@3", "ndcg@10", "recall@5%", "ndcg@10%"} <= set(rep)


def test_exhaustive_small_auc():
    for n in range(2, 6):
        for labels in itertools.product((0, 1), repeat=n):
            if len(set(labels)) < 2:
                continue
            scores = [((i * 7) % 3) / 3 for i in range(n)]
            assert roc_auc(scores, labels) == brute_auc(scores, labels)
