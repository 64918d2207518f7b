import numpy as np
import pytest
from hypothesis import given, strategies as st

from enginectx.learn import backend
from enginectx.learn._kernel_py import GINI, MSE
from enginectx.learn._rng import SplitMix64, derive_seed
from enginectx.learn.tree import Binner, grow

KEYS = ("feature", "threshold_bin", "left", "right", "stats", "count", "importance", "leaf_of_row")

needs_compiled = pytest.mark.skipif("compiled" not in backend.available_backends(),
                                    reason="compiled kernel not built")


def test_splitmix_reference_values():
    r = SplitMix64(0)
    assert r.next() == 0xE220A8397B1DCDAF
    assert r.next() == 0x6E789E6AA1B965F4
    assert derive_seed(5, 1) != derive_seed(5, 2) != derive_seed(5)
    assert derive_seed(5, 1, 2) == derive_seed(5, 1, 2)


@given(st.integers(0, 10 ** 6), st.integers(2, 300))
def test_binner_routes_like_float_thresholds(seed, max_bins):
    rng = np.random.default_rng(seed)
    X = np.round(rng.standard_normal((200, 3)), int(rng.integers(0, 3)))
    b = Binner.fit(X, max_bins=min(max_bins, 256))
    Xb = b.transform(X)
    for j, e in enumerate(b.edges):
        assert e.size + 1 <= min(max_bins, 256)
        assert np.all(np.diff(e) > 0)
        for t in range(e.size):
            assert np.array_equal(Xb[:, j] <= t, X[:, j] <= e[t])


def _problem(seed, criterion, n=80, f=5, k=3):
    rng = np.random.default_rng(seed)
    X = np.round(rng.standard_normal((n, f)), 1)
    b = Binner.fit(X)
    if criterion == GINI:
        y = (X[:, 0] + 0.5 * rng.standard_normal(n) > 0).astype(int) + (X[:, 1] > 1)
        Y = np.eye(k)[y] * rng.uniform(0.5, 2.0, n)[:, None]
    else:
        r = np.tanh(X[:, 2]) + 0.3 * rng.standard_normal(n)
        w = rng.uniform(0.5, 2.0, n)
        Y = np.column_stack([w * r, w])
    cnt = rng.integers(0, 3, n).astype(np.float64)
    cnt[0] = 1.0
    return X, b, Y * cnt[:, None], cnt


@needs_compiled
@given(st.integers(0, 10 ** 6), st.sampled_from([GINI, MSE]), st.integers(-1, 6),
       st.integers(1, 4), st.integers(1, 5), st.booleans())
def test_python_and_compiled_kernels_agree(seed, criterion, depth, min_leaf, mf, extra):
    X, b, Y, cnt = _problem(seed, criterion)
    out = {}
    for name in ("python", "compiled"):
        with backend.use_backend(name):
            out[name] = grow(b.transform(X), b, Y, cnt, criterion, depth, min_leaf, mf, extra, seed)
    for key in KEYS:
        assert np.array_equal(out["python"][key], out["compiled"][key]), key


def _brute_best_gini_gain(X, Y):
    """Best weighted gini decrease over every (feature, observed-value) cut."""
    def impurity_mass(S):
        w = S.sum()
        return 0.0 if w <= 0 else w - (S ** 2).sum() / w

    parent = impurity_mass(Y.sum(axis=0))
    best = -np.inf
    for j in range(X.shape[1]):
        for v in np.unique(X[:, j])[:-1]:
            left = X[:, j] <= v
            gain = parent - impurity_mass(Y[left].sum(axis=0)) - impurity_mass(Y[~left].sum(axis=0))
            best = max(best, gain)
    return best


@given(st.integers(0, 10 ** 6))
def test_root_split_is_exhaustive_optimum(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.standard_normal((40, 3)), 1)
    y = rng.integers(0, 3, 40)
    Y = np.eye(3)[y]
    b = Binner.fit(X)
    raw = grow(b.transform(X), b, Y, np.ones(40), GINI, 1, 1, 3, False, 0)
    want = _brute_best_gini_gain(X, Y)
    if raw["feature"][0] < 0:
        assert want <= 1e-9
        return
    assert raw["importance"].sum() == pytest.approx(want, rel=1e-9, abs=1e-12)
    j, t = raw["feature"][0], raw["threshold"][0]
    left = X[:, j] <= t
    assert np.array_equal(raw["leaf_of_row"] == raw["left"][0], left)


def test_leaf_stats_sum_to_root_and_respect_min_leaf():
    X, b, Y, cnt = _problem(3, GINI, n=200)
    raw = grow(b.transform(X), b, Y, cnt, GINI, -1, 4, 5, False, 1)
    leaves = raw["feature"] < 0
    assert np.allclose(raw["stats"][leaves].sum(axis=0), raw["stats"][0])
    assert np.all(raw["count"][leaves] >= 4)
    live = raw["rows"]
    assert np.all(raw["leaf_of_row"][live] >= 0)
    assert np.all(leaves[raw["leaf_of_row"][live]])


def test_pure_node_is_not_split():
    X = np.arange(20.0)[:, None]
    b = Binner.fit(X)
    raw = grow(b.transform(X), b, np.eye(2)[np.zeros(20, int)], np.ones(20), GINI, -1, 1, 1, False, 0)
    assert raw["feature"].tolist() == [-1]


@needs_compiled
@pytest.mark.parametrize("kind", ["bagged_forest", "extra_random_forest", "gradient_boosted"])
def test_trained_models_identical_across_backends(kind):
    from enginectx.learn.ensemble import train

    rng = np.random.default_rng(0)
    X = rng.standard_normal((120, 6))
    y = (X[:, 0] * X[:, 1] > 0).astype(str)
    blobs = []
    for name in ("python", "compiled"):
        with backend.use_backend(name):
            blobs.append(train(kind, X, y, {"n_estimators": 6}, seed=3).to_bytes())
    assert blobs[0] == blobs[1]
