import numpy as np
import pytest
from hypothesis import given, strategies as st

from enginectx.errors import LearnError
from enginectx.learn.ensemble import train
from enginectx.learn.reduce import rank_features, reduce_features, select_columns


def test_top_k_and_cumulative_examples():
    imp = np.array([0.5, 0.3, 0.2])
    assert select_columns(imp, 2).tolist() == [0, 1]
    assert select_columns(imp, 0.79).tolist() == [0, 1]
    assert select_columns(imp, 0.8).tolist() == [0, 1]
    assert select_columns(imp, 0.81).tolist() == [0, 1, 2]
    assert select_columns(imp, 0.5).tolist() == [0]


def test_ties_go_to_lower_index():
    assert rank_features(np.array([0.2, 0.4, 0.2, 0.2])).tolist() == [1, 0, 2, 3]
    assert select_columns(np.array([0.25] * 4), 2).tolist() == [0, 1]


def test_keep_out_of_range():
    for keep in (0, 4, 1.5, 0.0, True):
        with pytest.raises(LearnError):
            select_columns(np.array([0.5, 0.3, 0.2]), keep)


def test_all_zero_importances_keep_everything_for_shares():
    assert select_columns(np.zeros(3), 0.5).tolist() == [0, 1, 2]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=30), st.floats(0.01, 1.0))
def test_cumulative_prefix_is_minimal(imp, share):
    imp = np.array(imp)
    cols = select_columns(imp, share)
    if imp.sum() == 0:
        return
    got = imp[cols].sum() / imp.sum()
    assert got >= share - 1e-9
    # dropping the weakest chosen column falls short
    if cols.size > 1:
        weakest = rank_features(imp)[cols.size - 1]
        assert (imp[cols].sum() - imp[weakest]) / imp.sum() < share


def test_reduce_with_trained_reducer():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((100, 6))
    y = np.where(X[:, 4] > 0, "a", "b")
    m = train("bagged_forest", X, y, {"n_estimators": 20})
    cols, Xr = reduce_features(m, X, 1)
    assert cols.tolist() == [4]
    assert np.array_equal(Xr, X[:, [4]])
    with pytest.raises(LearnError):
        reduce_features(m, X[:, :5], 1)
