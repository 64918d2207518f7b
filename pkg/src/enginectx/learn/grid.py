"""Grid search over ensemble settings and feature configurations.

Every cell sees the same source-disjoint folds. Cells are ranked by macro
ROC-AUC, then PR-AUC, then cell id; failed cells are kept with their error
and sort last.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..dataset import clip_labels, featurize_clips
from ..errors import EngineCtxError, LearnError
from ..features import FeatureConfig
from ..signal import AudioClip, split_by_source
from ._rng import derive_seed
from .ensemble import resolve_hyperparams, train
from .metrics import evaluate


@dataclass(frozen=True)
class GridSpec:
    models: tuple          # of {"kind": ..., "hyperparams": {...}}
    features: tuple        # of FeatureConfig
    label: str
    folds: int = 3
    test_fraction: float = 0.3
    segments_per_clip: int = 3

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        feats = d.get("features") or [{}]
        return cls(
            models=tuple({"kind": m["kind"], "hyperparams": dict(m.get("hyperparams", {}))}
                         for m in d["models"]),
            features=tuple(f if isinstance(f, FeatureConfig) else FeatureConfig.from_dict(f)
                           for f in feats),
            label=d["label"],
            folds=int(d.get("folds", 3)),
            test_fraction=float(d.get("test_fraction", 0.3)),
            segments_per_clip=int(d.get("segments_per_clip", 3)),
        )

    def validate(self) -> None:
        if not self.models or not self.features:
            raise LearnError("grid must have at least one model and one feature config")
        if self.folds < 1:
            raise LearnError("folds must be positive")
        for m in self.models:
            resolve_hyperparams(m["kind"], m["hyperparams"])
        for f in self.features:
            f.validate()

    def cells(self) -> list[tuple[str, dict, FeatureConfig]]:
        out = []
        for j, fc in enumerate(self.features):
            for i, m in enumerate(self.models):
                out.append((f"m{i:03d}-f{j:03d}", m, fc))
        return out


def fold_splits(clips: Sequence[AudioClip], folds: int, test_fraction: float, seed: int):
    return [split_by_source(clips, test_fraction, derive_seed(seed, f) & 0xFFFFFFFF)
            for f in range(folds)]


def _rank_key(r: dict):
    roc = r["roc_auc"] if r["roc_auc"] is not None else -math.inf
    pr = r["pr_auc"] if r["pr_auc"] is not None else -math.inf
    return (r["status"] != "ok", -roc, -pr, r["cell_id"])


def _mean(vals) -> float | None:
    v = [x for x in vals if x is not None and not math.isnan(x)]
    return float(np.mean(v)) if v else None


def grid_search(grid: GridSpec | dict, clips: Sequence[AudioClip], seed: int = 0,
                n_jobs: int = 1) -> list[dict]:
    grid = grid if isinstance(grid, GridSpec) else GridSpec.from_dict(grid)
    grid.validate()
    splits = fold_splits(clips, grid.folds, grid.test_fraction, seed)
    cache: dict = {}
    results = []
    for cell_id, model, fc in grid.cells():
        rec = {"cell_id": cell_id, "kind": model["kind"], "hyperparams": model["hyperparams"],
               "feature_config": fc.to_dict(), "feature_hash": fc.digest()}
        try:
            rocs, prs, accs = [], [], []
            for f, (tr, te) in enumerate(splits):
                key = (fc.digest(), f)
                if key not in cache:
                    fseed = derive_seed(seed, 1000 + f) & 0xFFFFFFFF
                    Xtr, otr = featurize_clips(tr, fc, grid.segments_per_clip, fseed)
                    Xte, ote = featurize_clips(te, fc, grid.segments_per_clip, fseed)
                    ytr = [clip_labels(tr, grid.label)[i] for i in otr]
                    yte = [clip_labels(te, grid.label)[i] for i in ote]
                    cache[key] = (Xtr, ytr, Xte, yte)
                Xtr, ytr, Xte, yte = cache[key]
                m = train(model["kind"], Xtr, ytr, model["hyperparams"], seed=derive_seed(seed, f),
                          n_jobs=n_jobs)
                rep = evaluate(m, Xte, yte)
                rocs.append(rep.roc_auc)
                prs.append(rep.pr_auc)
                accs.append(rep.accuracy)
            rec.update(status="ok", error=None, roc_auc=_mean(rocs), pr_auc=_mean(prs),
                       accuracy=_mean(accs), fold_roc_auc=[None if math.isnan(v) else v for v in rocs])
        except EngineCtxError as exc:
            rec.update(status="error", error=f"{type(exc).__name__}: {exc}", roc_auc=None,
                       pr_auc=None, accuracy=None, fold_roc_auc=[])
        results.append(rec)
    results.sort(key=_rank_key)
    for rank, r in enumerate(results, start=1):
        r["rank"] = rank
    return results


CSV_COLUMNS = ("rank", "cell_id", "status", "kind", "roc_auc", "pr_auc", "accuracy",
               "feature_hash", "hyperparams", "error")


def results_csv(results: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in results:
        row = []
        for c in CSV_COLUMNS:
            v = r.get(c)
            if c == "hyperparams":
                v = json.dumps(v, sort_keys=True)
            elif isinstance(v, float):
                v = repr(v)
            row.append("" if v is None else v)
        w.writerow(row)
    return buf.getvalue()


def write_results(results: list[dict], stem: str | os.PathLike, config_hash: str = "") -> tuple[Path, Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    csv_path.write_text(results_csv(results))
    doc = {"config_hash": config_hash, "results": results}
    json_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return csv_path, json_path
