"""Reference tree builder in numpy.

Mirrors ``_kernel_c.pyx`` operation for operation so both produce identical
trees: histogram and child sums accumulate in row order, per-class sums in
class order, and candidate/threshold draws consume the same SplitMix64 stream.
"""

from __future__ import annotations

import numpy as np

from ._rng import SplitMix64

GINI = 0
MSE = 1
GAIN_EPS = 1e-12


def _row_sums(Y: np.ndarray, rows: np.ndarray) -> np.ndarray:
    zeros = np.zeros(rows.size, dtype=np.intp)
    return np.array([np.bincount(zeros, weights=Y[rows, j], minlength=1)[0]
                     for j in range(Y.shape[1])])


def _proxy(S, criterion: int):
    """Impurity proxy sum_j S_j^2 / W (gini) or S_0^2 / S_1 (mse).

    Works elementwise on a (m, ...) stack; zero where the weight is not positive.
    """
    if criterion == GINI:
        w = S[0] * 1.0
        q = S[0] * S[0]
        for j in range(1, S.shape[0]):
            w = w + S[j]
            q = q + S[j] * S[j]
    else:
        w = S[1] * 1.0
        q = S[0] * S[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(w > 0, q / np.where(w > 0, w, 1.0), 0.0), w


def build_tree(Xb, nbins, Y, cnt, rows, criterion, max_depth, min_leaf, max_features,
               extra, seed):
    Xb = np.ascontiguousarray(Xb, dtype=np.uint8)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    cnt = np.ascontiguousarray(cnt, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.intp)
    n_all, n_feat = Xb.shape
    m = Y.shape[1]
    max_features = min(max_features, n_feat)
    rng = SplitMix64(seed)

    feature, thr, left, right, stats, count = [], [], [], [], [], []
    importance = np.zeros(n_feat)
    leaf_of_row = np.full(n_all, -1, dtype=np.int32)
    perm = np.arange(n_feat, dtype=np.intp)

    def new_node(r):
        feature.append(-1)
        thr.append(-1)
        left.append(-1)
        right.append(-1)
        stats.append(_row_sums(Y, r))
        count.append(_row_sums(cnt[:, None], r)[0])
        return len(feature) - 1

    root = new_node(rows)
    stack = [(root, rows, 0)]
    while stack:
        node, r, depth = stack.pop()
        S = stats[node]
        c = count[node]
        splittable = depth < max_depth and c >= 2 * min_leaf
        if splittable and criterion == GINI:
            splittable = np.count_nonzero(S > 0) > 1
        best_gain, best_f, best_t = -np.inf, -1, -1
        if splittable:
            pp = float(_proxy(S[:, None], criterion)[0][0])
            if max_features < n_feat:
                perm[:] = np.arange(n_feat)
                for i in range(max_features):
                    j = i + rng.below(n_feat - i)
                    perm[i], perm[j] = perm[j], perm[i]
                cands = perm[:max_features].copy()
            else:
                cands = np.arange(n_feat)
            xr = Xb[r]
            wr = cnt[r]
            for f in cands:
                nb = int(nbins[f])
                col = xr[:, f]
                hc = np.bincount(col, weights=wr, minlength=nb)
                occupied = np.flatnonzero(hc > 0)
                lo, hi = int(occupied[0]), int(occupied[-1])
                if lo == hi:
                    continue
                H = np.stack([np.bincount(col, weights=Y[r, j], minlength=nb) for j in range(m)])
                L = np.cumsum(H, axis=1)
                cl = np.cumsum(hc)
                if extra:
                    t = lo + rng.below(hi - lo)
                    ts = np.array([t])
                else:
                    ts = np.arange(lo, hi)
                Ls = L[:, ts]
                Rs = S[:, None] - Ls
                pl, wl = _proxy(Ls, criterion)
                pr, wr_ = _proxy(Rs, criterion)
                gain = pl + pr - pp
                ok = (cl[ts] >= min_leaf) & ((c - cl[ts]) >= min_leaf) & (wl > 0) & (wr_ > 0)
                if not ok.any():
                    continue
                gain = np.where(ok, gain, -np.inf)
                k = int(np.argmax(gain))
                if gain[k] > best_gain:
                    best_gain, best_f, best_t = float(gain[k]), int(f), int(ts[k])
            if best_f < 0 or not best_gain > GAIN_EPS * (1.0 + abs(pp)):
                splittable = False
        if not splittable:
            leaf_of_row[r] = node
            continue
        mask = Xb[r, best_f] <= best_t
        rl, rr = r[mask], r[~mask]
        importance[best_f] += best_gain
        feature[node] = best_f
        thr[node] = best_t
        li = new_node(rl)
        ri = new_node(rr)
        left[node], right[node] = li, ri
        stack.append((ri, rr, depth + 1))
        stack.append((li, rl, depth + 1))

    return {
        "feature": np.array(feature, dtype=np.int32),
        "threshold_bin": np.array(thr, dtype=np.int32),
        "left": np.array(left, dtype=np.int32),
        "right": np.array(right, dtype=np.int32),
        "stats": np.array(stats, dtype=np.float64).reshape(len(feature), m),
        "count": np.array(count, dtype=np.float64),
        "importance": importance,
        "leaf_of_row": leaf_of_row,
    }
