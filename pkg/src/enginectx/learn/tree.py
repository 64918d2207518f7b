"""Feature binning and the fitted decision-tree container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import LearnError
from . import backend

MAX_BINS = 256


class Binner:
    """Per-feature threshold edges mapping float columns to uint8 bin codes.

    A value's bin is the number of edges strictly below it, so ``bin <= t``
    holds exactly when ``x <= edges[t]``. Trees trained on bins therefore
    route raw values identically through the stored float thresholds.
    """

    def __init__(self, edges: list[np.ndarray]):
        self.edges = [np.asarray(e, dtype=np.float64) for e in edges]

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = MAX_BINS) -> "Binner":
        if not 2 <= max_bins <= MAX_BINS:
            raise LearnError(f"max_bins must be in [2, {MAX_BINS}]")
        edges = []
        for col in np.asarray(X, dtype=np.float64).T:
            u = np.unique(col)
            if u.size <= max_bins:
                e = (u[:-1] + u[1:]) / 2.0
            else:
                q = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1], method="lower")
                e = np.unique(q)
                e = e[e < u[-1]]
            edges.append(np.unique(e))
        return cls(edges)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([e.size + 1 for e in self.edges], dtype=np.int64)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape, dtype=np.uint8)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out


@dataclass(frozen=True)
class DecisionTree:
    """Flat binary tree; internal nodes have feature >= 0.

    `value` holds the prediction at each node (class distribution for
    classifiers, a scalar column for regression trees); `histogram` holds
    the unweighted per-class count of training rows routed to each leaf.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    histogram: np.ndarray | None = None

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):  # children always follow parents
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        active = self.feature[node] >= 0
        while active.any():
            r = rows[active]
            nd = node[r]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])
            active[r] = self.feature[node[r]] >= 0
        return node

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def arrays(self) -> dict:
        out = {"feature": self.feature, "threshold": self.threshold, "left": self.left,
               "right": self.right, "value": self.value, "count": self.count}
        if self.histogram is not None:
            out["histogram"] = self.histogram
        return out

    @classmethod
    def from_arrays(cls, a: dict) -> "DecisionTree":
        return cls(a["feature"], a["threshold"], a["left"], a["right"], a["value"],
                   a["count"], a.get("histogram"))


def grow(Xb: np.ndarray, binner: Binner, Y: np.ndarray, cnt: np.ndarray, criterion: int,
         max_depth: int, min_leaf: int, max_features: int, extra: bool, seed: int) -> dict:
    """Run the active tree kernel on rows with positive multiplicity.

    Returns the raw kernel output with float thresholds attached.
    """
    rows = np.flatnonzero(cnt > 0)
    depth = max_depth if max_depth is not None and max_depth >= 0 else np.iinfo(np.int32).max
    raw = backend.build_tree(Xb, binner.n_bins, Y, cnt, rows, criterion, int(depth),
                             float(min_leaf), int(max_features), bool(extra), int(seed))
    thr = np.full(raw["feature"].size, np.nan)
    internal = np.flatnonzero(raw["feature"] >= 0)
    for i in internal:
        thr[i] = binner.edges[raw["feature"][i]][raw["threshold_bin"][i]]
    raw["threshold"] = thr
    raw["rows"] = rows
    return raw
