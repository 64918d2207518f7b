import numpy as np
import pytest
from hypothesis import given, strategies as st

from enginectx.errors import LearnError
from enginectx.learn.ensemble import train
from enginectx.learn.metrics import (
    EvalReport,
    column_normalize,
    confusion,
    evaluate,
    evaluate_proba,
    pr_auc_binary,
    roc_auc_binary,
)
from oracles import mann_whitney_auc


@given(st.integers(0, 10 ** 6), st.integers(2, 80), st.integers(1, 6))
def test_sweep_auc_equals_rank_statistic(seed, n, levels):
    rng = np.random.default_rng(seed)
    scores = rng.integers(0, levels + 1, n) / levels  # coarse grid forces ties
    positive = rng.random(n) < 0.5
    positive[0], positive[-1] = True, False
    assert roc_auc_binary(scores, positive) == pytest.approx(mann_whitney_auc(scores, positive), abs=1e-9)


def _brute_average_precision(scores, positive):
    total = positive.sum()
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(scores), reverse=True):
        hit = scores >= t
        tp = np.sum(hit & positive)
        recall = tp / total
        ap += (recall - prev_recall) * tp / hit.sum()
        prev_recall = recall
    return ap


@given(st.integers(0, 10 ** 6))
def test_average_precision_matches_threshold_loop(seed):
    rng = np.random.default_rng(seed)
    scores = np.round(rng.random(50), 1)
    positive = rng.random(50) < 0.4
    positive[0] = True
    assert pr_auc_binary(scores, positive) == pytest.approx(_brute_average_precision(scores, positive))


def test_perfect_classifier():
    proba = np.array([[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9]])
    r = evaluate_proba(proba, ["a", "a", "b", "b"], ("a", "b"))
    assert r.roc_auc == 1.0 and r.pr_auc == 1.0 and r.accuracy == 1.0
    assert np.array_equal(r.confusion, [[2, 0], [0, 2]])


def test_uniform_random_scores_give_half():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 10_000).astype(bool)
    assert roc_auc_binary(rng.random(10_000), y) == pytest.approx(0.5, abs=0.03)


def test_absent_class_is_nan_and_macro_skips_it():
    assert np.isnan(roc_auc_binary([0.1, 0.2], [True, True]))
    proba = np.array([[0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.5, 0.4, 0.1]])
    r = evaluate_proba(proba, ["a", "b", "a"], ("a", "b", "c"))
    assert np.isnan(r.roc_auc_per_class[2])
    assert r.roc_auc == pytest.approx(np.mean(r.roc_auc_per_class[:2]))
    assert r.to_dict()["roc_auc_per_class"][2] is None


def test_confusion_is_pred_by_true_and_columns_sum_to_one():
    y_true = np.array([0, 0, 0, 1, 1, 2])
    y_pred = np.array([0, 1, 1, 1, 1, 2])
    m = confusion(y_true, y_pred, 4)
    assert m[1, 0] == 2 and m[0, 0] == 1
    cn = column_normalize(m)
    assert np.allclose(cn[:, :3].sum(axis=0), 1.0, atol=1e-9)
    assert np.all(cn[:, 3] == 0)


def test_reporting_format_for_two_class_table():
    # reference layout: column-normalized [[0.72, 0.09], [0.28, 0.91]]
    cm = np.array([[72, 9], [28, 91]])
    cn = column_normalize(cm)
    assert np.allclose(cn, [[0.72, 0.09], [0.28, 0.91]])
    r = EvalReport(("natural", "turbo"), cm, cn, 0.82, 0.8, np.array([0.82, 0.82]),
                   np.array([0.8, 0.8]), 0.815, 200)
    text = r.format_table()
    lines = text.splitlines()
    assert lines[0].split()[-2:] == ["natural", "turbo"]
    assert lines[1].split()[1:] == ["0.72", "0.09"]
    assert lines[2].split()[1:] == ["0.28", "0.91"]
    assert "ROC-AUC 0.82" in text and "PR-AUC 0.80" in text


def test_evaluate_model_and_errors():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 3))
    y = np.where(X[:, 0] > 0, "p", "n")
    m = train("bagged_forest", X, y, {"n_estimators": 10})
    r = evaluate(m, X, y)
    assert r.n == 60 and r.confusion.sum() == 60
    with pytest.raises(LearnError):
        evaluate(m, np.zeros((0, 3)), [])
    with pytest.raises(LearnError):
        evaluate(m, X, ["q"] * 60)
    with pytest.raises(LearnError):
        evaluate_proba(np.zeros((2, 3)), ["a", "b"], ("a", "b"))
