"""Tree ensembles: bagged forest, extra-random forest, gradient boosting.

All three share the histogram tree kernel. Every tree's randomness comes
from a seed derived from (master seed, tree index), so training with any
number of threads gives the same model as serial training.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import LearnError
from . import serialize
from ._kernel_py import GINI, MSE
from ._rng import derive_seed
from .tree import MAX_BINS, Binner, DecisionTree, grow

KINDS = ("bagged_forest", "extra_random_forest", "gradient_boosted")

_FOREST = {"n_estimators": 300, "max_depth": None, "min_samples_leaf": 1,
           "max_features": "sqrt", "class_weight": None, "max_bins": MAX_BINS}
DEFAULTS = {
    "bagged_forest": dict(_FOREST, bootstrap=True),
    "extra_random_forest": dict(_FOREST, bootstrap=False),
    "gradient_boosted": {"n_estimators": 200, "max_depth": 3, "min_samples_leaf": 1,
                         "max_features": None, "class_weight": None, "max_bins": MAX_BINS,
                         "learning_rate": 0.1},
}


def resolve_hyperparams(kind: str, hyperparams: dict | None) -> dict:
    if kind not in KINDS:
        raise LearnError(f"unknown ensemble kind {kind!r}; expected one of {KINDS}")
    hp = dict(DEFAULTS[kind])
    for k, v in (hyperparams or {}).items():
        if k not in hp:
            raise LearnError(f"unknown hyperparameter {k!r} for {kind}")
        hp[k] = v
    if int(hp["n_estimators"]) < 1:
        raise LearnError("n_estimators must be positive")
    if int(hp["min_samples_leaf"]) < 1:
        raise LearnError("min_samples_leaf must be positive")
    if hp["class_weight"] not in (None, "balanced"):
        raise LearnError("class_weight must be None or 'balanced'")
    if kind == "gradient_boosted" and not float(hp["learning_rate"]) > 0:
        raise LearnError("learning_rate must be positive")
    return hp


def n_candidate_features(spec, n_features: int) -> int:
    if spec is None or spec == "all":
        return n_features
    if spec == "sqrt":
        return max(1, int(math.isqrt(n_features)))
    if spec == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(spec, float):
        if not 0.0 < spec <= 1.0:
            raise LearnError("fractional max_features must be in (0, 1]")
        return max(1, int(spec * n_features))
    if isinstance(spec, (int, np.integer)) and spec >= 1:
        return min(int(spec), n_features)
    raise LearnError(f"bad max_features {spec!r}")


def _check_rows(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise LearnError("rows must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise LearnError("rows contain non-finite values")
    return X


def _class_weights(y: np.ndarray, k: int, mode) -> np.ndarray:
    if mode is None:
        return np.ones(k)
    freq = np.bincount(y, minlength=k).astype(np.float64)
    return y.size / (k * freq)


def _softmax(F: np.ndarray) -> np.ndarray:
    z = F - F.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class TreeEnsemble:
    kind: str
    classes: tuple
    trees: tuple
    hyperparams: dict
    n_features: int
    importances: np.ndarray
    importances_degenerate: bool = False
    init_score: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def _check_predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise LearnError(f"row width {X.shape[-1]} does not match training width {self.n_features}")
        if not np.all(np.isfinite(X)):
            raise LearnError("rows contain non-finite values")
        return X

    def decision_function(self, X) -> np.ndarray:
        """Raw per-class scores (boosting log-odds; forest mean distribution)."""
        X = self._check_predict(X)
        k = self.n_classes
        if self.kind == "gradient_boosted":
            F = np.tile(self.init_score, (X.shape[0], 1))
            lr = float(self.hyperparams["learning_rate"])
            for i, t in enumerate(self.trees):
                F[:, i % k] += lr * t.predict_value(X)
            return F
        acc = np.zeros((X.shape[0], k))
        for t in self.trees:
            acc += t.predict_value(X)
        return acc / len(self.trees)

    def predict_proba(self, X) -> np.ndarray:
        s = self.decision_function(X)
        if self.kind == "gradient_boosted":
            return _softmax(s)
        return s / s.sum(axis=1, keepdims=True)

    def predict(self, X) -> list:
        p = self.predict_proba(X)
        return [self.classes[i] for i in np.argmax(p, axis=1)]

    # -- serialization ---------------------------------------------------

    def to_arrays(self, prefix: str = "") -> tuple[dict, dict]:
        header = {"kind": self.kind, "classes": list(self.classes),
                  "hyperparams": self.hyperparams, "n_features": self.n_features,
                  "n_trees": len(self.trees), "importances_degenerate": self.importances_degenerate,
                  "meta": self.meta}
        arrays = {f"{prefix}importances": self.importances}
        if self.init_score is not None:
            arrays[f"{prefix}init_score"] = self.init_score
        sizes = np.array([t.n_nodes for t in self.trees], dtype=np.int64)
        arrays[f"{prefix}tree_sizes"] = sizes
        for name in self.trees[0].arrays():
            arrays[f"{prefix}{name}"] = np.concatenate([t.arrays()[name] for t in self.trees])
        return header, arrays

    @classmethod
    def from_arrays(cls, header: dict, arrays: dict, prefix: str = "") -> "TreeEnsemble":
        sizes = arrays[f"{prefix}tree_sizes"]
        bounds = np.concatenate([[0], np.cumsum(sizes)])
        names = [n for n in ("feature", "threshold", "left", "right", "value", "count", "histogram")
                 if f"{prefix}{n}" in arrays]
        trees = []
        for i in range(sizes.size):
            lo, hi = bounds[i], bounds[i + 1]
            trees.append(DecisionTree.from_arrays({n: arrays[f"{prefix}{n}"][lo:hi] for n in names}))
        return cls(kind=header["kind"], classes=tuple(header["classes"]), trees=tuple(trees),
                   hyperparams=header["hyperparams"], n_features=int(header["n_features"]),
                   importances=arrays[f"{prefix}importances"],
                   importances_degenerate=bool(header["importances_degenerate"]),
                   init_score=arrays.get(f"{prefix}init_score"), meta=header.get("meta", {}))

    def to_bytes(self) -> bytes:
        header, arrays = self.to_arrays()
        return serialize.pack({"type": "tree_ensemble", "model": header}, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TreeEnsemble":
        header, arrays = serialize.unpack(data)
        if header.get("type") != "tree_ensemble":
            raise LearnError("container does not hold a tree ensemble")
        return cls.from_arrays(header["model"], arrays)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        return cls.from_bytes(serialize.read_bytes(path))


def _map(fn, items, n_jobs: int) -> list:
    if n_jobs is None or n_jobs <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(fn, items))


def _finish_importances(imp: np.ndarray) -> tuple[np.ndarray, bool]:
    total = imp.sum()
    if not total > 0:
        return np.zeros_like(imp), True
    return imp / total, False


def train(kind: str, rows, labels, hyperparams: dict | None = None, seed: int = 0,
          n_jobs: int = 1) -> TreeEnsemble:
    """Fit an ensemble; deterministic given `seed`, independent of `n_jobs`."""
    hp = resolve_hyperparams(kind, hyperparams)
    X = _check_rows(rows)
    labels = [str(v) for v in labels]
    if len(labels) != X.shape[0]:
        raise LearnError("rows and labels differ in length")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise LearnError("training needs at least 2 classes")
    index = {c: i for i, c in enumerate(classes)}
    y = np.array([index[v] for v in labels], dtype=np.int64)
    binner = Binner.fit(X, int(hp["max_bins"]))
    Xb = binner.transform(X)
    n, f = X.shape
    k = len(classes)
    cw = _class_weights(y, k, hp["class_weight"])
    mf = n_candidate_features(hp["max_features"], f)
    depth = -1 if hp["max_depth"] is None else int(hp["max_depth"])
    min_leaf = int(hp["min_samples_leaf"])
    if kind == "gradient_boosted":
        return _train_boosted(X, Xb, binner, y, classes, cw, hp, mf, depth, min_leaf, seed, n_jobs)

    onehot = np.eye(k)[y] * cw[y][:, None]
    extra = kind == "extra_random_forest"

    def fit_one(t: int):
        tseed = derive_seed(seed, t)
        if hp["bootstrap"]:
            draw = np.random.default_rng(tseed).integers(0, n, size=n)
            cnt = np.bincount(draw, minlength=n).astype(np.float64)
        else:
            cnt = np.ones(n)
        raw = grow(Xb, binner, onehot * cnt[:, None], cnt, GINI, depth, min_leaf, mf, extra,
                   derive_seed(seed, t, 1))
        stats = raw["stats"]
        value = stats / stats.sum(axis=1, keepdims=True)
        hist = np.zeros((stats.shape[0], k))
        r = raw["rows"]
        np.add.at(hist, (raw["leaf_of_row"][r], y[r]), cnt[r])
        tree = DecisionTree(raw["feature"], raw["threshold"], raw["left"], raw["right"],
                            value, raw["count"], hist)
        return tree, raw["importance"]

    fitted = _map(fit_one, range(int(hp["n_estimators"])), n_jobs)
    imp = np.zeros(f)
    for _, g in fitted:
        s = g.sum()
        if s > 0:
            imp += g / s
    imp, degenerate = _finish_importances(imp)
    return TreeEnsemble(kind, classes, tuple(t for t, _ in fitted), hp, f, imp, degenerate)


def deviance(proba: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Weighted multinomial deviance -sum w log p_true."""
    p = np.clip(proba[np.arange(y.size), y], 1e-300, None)
    w = np.ones(y.size) if weights is None else weights
    return float(-np.sum(w * np.log(p)))


def _train_boosted(X, Xb, binner, y, classes, cw, hp, mf, depth, min_leaf, seed, n_jobs):
    n, f = X.shape
    k = len(classes)
    w = cw[y]
    prior = np.bincount(y, weights=w, minlength=k) / w.sum()
    init = np.log(prior)
    F = np.tile(init, (n, 1))
    onehot = np.eye(k)[y]
    lr = float(hp["learning_rate"])
    ones = np.ones(n)
    scale = (k - 1) / k
    trees = []
    imp = np.zeros(f)
    history = []

    for m in range(int(hp["n_estimators"])):
        resid = onehot - _softmax(F)

        def fit_class(c: int):
            r = resid[:, c]
            Y = np.column_stack([w * r, w])
            raw = grow(Xb, binner, Y, ones, MSE, depth, min_leaf, mf, False,
                       derive_seed(seed, m, c))
            leaf = raw["leaf_of_row"]
            nn = raw["feature"].size
            num = np.bincount(leaf, weights=w * r, minlength=nn)
            den = np.bincount(leaf, weights=w * np.abs(r) * (1.0 - np.abs(r)), minlength=nn)
            gamma = np.where(den > 1e-150, scale * num / np.where(den > 1e-150, den, 1.0), 0.0)
            gamma[raw["feature"] >= 0] = 0.0
            tree = DecisionTree(raw["feature"], raw["threshold"], raw["left"], raw["right"],
                                gamma, raw["count"])
            return tree, raw["importance"], gamma[leaf]

        fitted = _map(fit_class, range(k), n_jobs)
        for c, (tree, g, step) in enumerate(fitted):
            trees.append(tree)
            imp += g
            F[:, c] += lr * step
        history.append(deviance(_softmax(F), y, w))

    imp, degenerate = _finish_importances(imp)
    return TreeEnsemble("gradient_boosted", classes, tuple(trees), hp, f, imp, degenerate,
                        init_score=init, meta={"train_deviance": history})
