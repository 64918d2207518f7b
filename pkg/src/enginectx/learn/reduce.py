"""Importance-ranked column selection."""

from __future__ import annotations

import numpy as np

from ..errors import LearnError


def rank_features(importances: np.ndarray) -> np.ndarray:
    """Column indices by descending importance, ties to the lower index."""
    imp = np.asarray(importances, dtype=np.float64)
    return np.lexsort((np.arange(imp.size), -imp))


def select_columns(importances: np.ndarray, keep) -> np.ndarray:
    """Sorted column indices chosen by a count or a cumulative-importance share.

    An integer `keep` takes the top-k columns. A float in (0, 1] takes the
    shortest ranked prefix whose importance sum reaches `keep` of the total.
    """
    imp = np.asarray(importances, dtype=np.float64)
    order = rank_features(imp)
    if isinstance(keep, (bool, np.bool_)):
        raise LearnError("keep must be a count or a fraction")
    if isinstance(keep, (int, np.integer)):
        if not 1 <= keep <= imp.size:
            raise LearnError(f"keep={keep} outside [1, {imp.size}]")
        return np.sort(order[:keep])
    keep = float(keep)
    if not 0.0 < keep <= 1.0:
        raise LearnError("cumulative threshold must be in (0, 1]")
    total = imp.sum()
    if not total > 0:
        return np.arange(imp.size)
    cum = np.cumsum(imp[order]) / total
    n = int(np.searchsorted(cum, keep - 1e-12, side="left")) + 1
    return np.sort(order[:min(n, imp.size)])


def reduce_features(reducer, rows, keep) -> tuple[np.ndarray, np.ndarray]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != reducer.n_features:
        raise LearnError("rows do not match the reducer's feature schema")
    cols = select_columns(reducer.importances, keep)
    return cols, rows[:, cols]
