"""Sequential powertrain classification with per-clip segment voting.

Stage k sees the base segment features plus an encoding of the labels of
stages before it: ground truth while training, its own upstream predictions
at inference. Per-segment distributions of each stage are averaged over a
clip's segments and the argmax of the mean is the clip's label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import clip_labels, featurize_clips
from .errors import ChainError, LearnError
from .features import FeatureConfig
from .learn import serialize
from .learn._rng import derive_seed
from .learn.ensemble import TreeEnsemble, resolve_hyperparams, train
from .learn.metrics import EvalReport, evaluate_proba
from .learn.reduce import select_columns
from .signal import DEFAULT_SEGMENT_S, AudioClip, split_by_source

AUGMENT_MODES = ("both", "onehot", "proba", "none")
DEFAULT_SEGMENTS = 9


@dataclass(frozen=True)
class StageSpec:
    label: str
    classes: tuple | None = None          # inferred from training labels when None
    augment: str = "both"
    model: dict = field(default_factory=lambda: {"kind": "gradient_boosted", "hyperparams": {}})
    reducer: dict | None = None           # {"kind", "hyperparams", "keep"}

    def to_dict(self) -> dict:
        return {"label": self.label, "classes": list(self.classes) if self.classes else None,
                "augment": self.augment, "model": self.model, "reducer": self.reducer}

    @classmethod
    def from_dict(cls, d: dict) -> "StageSpec":
        model = d.get("model") or {"kind": "gradient_boosted"}
        model = {"kind": model["kind"], "hyperparams": dict(model.get("hyperparams", {}))}
        classes = d.get("classes")
        return cls(label=d["label"], classes=tuple(str(c) for c in classes) if classes else None,
                   augment=d.get("augment", "both"), model=model, reducer=d.get("reducer"))


@dataclass(frozen=True)
class ChainSpec:
    stages: tuple
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    segments_per_clip: int = DEFAULT_SEGMENTS
    segment_length_s: float = DEFAULT_SEGMENT_S
    validation_fraction: float | None = None

    def validate(self) -> None:
        if not self.stages:
            raise ChainError("chain needs at least one stage")
        names = [s.label for s in self.stages]
        if len(set(names)) != len(names):
            raise ChainError("stage labels must be unique")
        for s in self.stages:
            if s.augment not in AUGMENT_MODES:
                raise ChainError(f"augment must be one of {AUGMENT_MODES}")
            if s.classes is not None and len(s.classes) == 0:
                raise ChainError(f"stage {s.label!r} has an empty class set")
            try:
                resolve_hyperparams(s.model["kind"], s.model.get("hyperparams"))
                if s.reducer:
                    resolve_hyperparams(s.reducer["kind"], s.reducer.get("hyperparams"))
            except LearnError as exc:
                raise ChainError(f"stage {s.label!r}: {exc}") from exc
        if self.segments_per_clip < 1:
            raise ChainError("segments_per_clip must be positive")
        if self.validation_fraction is not None and not 0 < self.validation_fraction < 1:
            raise ChainError("validation_fraction must be in (0, 1)")
        self.feature_config.validate()

    def to_dict(self) -> dict:
        return {"stages": [s.to_dict() for s in self.stages],
                "feature_config": self.feature_config.to_dict(),
                "segments_per_clip": self.segments_per_clip,
                "segment_length_s": self.segment_length_s,
                "validation_fraction": self.validation_fraction}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        return cls(
            stages=tuple(StageSpec.from_dict(s) for s in d["stages"]),
            feature_config=FeatureConfig.from_dict(d.get("feature_config", {})),
            segments_per_clip=int(d.get("segments_per_clip", DEFAULT_SEGMENTS)),
            segment_length_s=float(d.get("segment_length_s", DEFAULT_SEGMENT_S)),
            validation_fraction=d.get("validation_fraction"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ChainSpec":
        return cls.from_dict(json.loads(text))


def default_spec(augment: str = "both", kind: str = "gradient_boosted",
                 hyperparams: dict | None = None, **kw) -> ChainSpec:
    """Aspiration, then fuel, then cylinder count (class-weighted)."""
    hp = dict(hyperparams or {})
    stages = (
        StageSpec("aspiration", augment=augment, model={"kind": kind, "hyperparams": hp}),
        StageSpec("fuel", augment=augment, model={"kind": kind, "hyperparams": hp}),
        StageSpec("cylinders", augment=augment,
                  model={"kind": kind, "hyperparams": dict(hp, class_weight="balanced")}),
    )
    return ChainSpec(stages=stages, **kw)


@dataclass(frozen=True)
class StageModel:
    label: str
    classes: tuple
    augment: str
    columns: np.ndarray          # base-feature columns kept by the reducer
    model: TreeEnsemble


def _encode(dist: np.ndarray, mode: str) -> list[np.ndarray]:
    if mode == "none":
        return []
    onehot = np.zeros_like(dist)
    onehot[np.arange(dist.shape[0]), np.argmax(dist, axis=1)] = 1.0
    if mode == "onehot":
        return [onehot]
    if mode == "proba":
        return [dist]
    return [onehot, dist]


def _design(base: np.ndarray, stage: StageModel, upstream: list[np.ndarray]) -> np.ndarray:
    blocks = [base[:, stage.columns]]
    for dist in upstream:
        blocks += _encode(dist, stage.augment)
    return np.hstack(blocks)


@dataclass(frozen=True)
class StagePrediction:
    classes: tuple
    distribution: np.ndarray             # voted (mean) distribution
    segment_distributions: np.ndarray    # one row per segment
    label: str
    confidence: float

    def to_dict(self) -> dict:
        return {"label": self.label, "confidence": float(self.confidence),
                "classes": list(self.classes),
                "distribution": [float(v) for v in self.distribution],
                "n_segments": int(self.segment_distributions.shape[0])}


@dataclass(frozen=True)
class ChainPrediction:
    stages: dict                         # label name -> StagePrediction
    source_id: str = ""

    def labels(self) -> dict:
        return {k: v.label for k, v in self.stages.items()}

    def to_dict(self) -> dict:
        return {"source_id": self.source_id,
                "stages": {k: v.to_dict() for k, v in self.stages.items()}}


def vote(segment_distributions: np.ndarray, classes: Sequence) -> StagePrediction:
    """Average segment distributions; exact ties go to the first (lexicographic) class."""
    d = np.asarray(segment_distributions, dtype=np.float64)
    # identical voters return their shared distribution exactly
    mean = d[0].copy() if np.all(d == d[0]) else d.mean(axis=0)
    i = int(np.argmax(mean))
    return StagePrediction(tuple(classes), mean, d, str(classes[i]), float(mean[i]))


@dataclass(frozen=True)
class TrainedChain:
    spec: ChainSpec
    stages: tuple
    validation: dict = field(default_factory=dict)   # stage label -> EvalReport dict

    @property
    def feature_hash(self) -> str:
        return self.spec.feature_config.digest()

    def stage_distributions(self, base: np.ndarray) -> list[np.ndarray]:
        """Per-row distribution of every stage, feeding predicted upstream labels."""
        dists: list[np.ndarray] = []
        for st in self.stages:
            dists.append(st.model.predict_proba(_design(base, st, dists)))
        return dists

    # -- serialization ---------------------------------------------------

    def to_bytes(self, config_hash: str = "") -> bytes:
        header = {"type": "trained_chain", "spec": self.spec.to_dict(),
                  "feature_hash": self.feature_hash, "config_hash": config_hash,
                  "validation": self.validation, "stages": []}
        arrays = {}
        for i, st in enumerate(self.stages):
            mh, ma = st.model.to_arrays(prefix=f"s{i}/")
            header["stages"].append({"label": st.label, "classes": list(st.classes),
                                     "augment": st.augment, "model": mh})
            arrays.update(ma)
            arrays[f"s{i}/columns"] = st.columns.astype(np.int64)
        return serialize.pack(header, arrays)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrainedChain":
        header, arrays = serialize.unpack(data)
        if header.get("type") != "trained_chain":
            raise ChainError("container does not hold a trained chain")
        stages = []
        for i, sh in enumerate(header["stages"]):
            model = TreeEnsemble.from_arrays(sh["model"], arrays, prefix=f"s{i}/")
            stages.append(StageModel(sh["label"], tuple(sh["classes"]), sh["augment"],
                                     arrays[f"s{i}/columns"], model))
        return cls(ChainSpec.from_dict(header["spec"]), tuple(stages), header.get("validation", {}))

    def save(self, path, config_hash: str = "") -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes(config_hash))

    @classmethod
    def load(cls, path) -> "TrainedChain":
        return cls.from_bytes(serialize.read_bytes(path))


def _fit_stages(spec: ChainSpec, X: np.ndarray, labels: dict, seed: int, n_jobs: int) -> tuple:
    stages = []
    truth: list[np.ndarray] = []
    for k, ss in enumerate(spec.stages):
        y = labels[ss.label]
        classes = ss.classes or tuple(sorted(set(y)))
        unknown = sorted(set(y) - set(classes))
        if unknown:
            raise ChainError(f"stage {ss.label!r}: labels {unknown} outside its class set")
        if len(set(y)) < 2:
            raise ChainError(f"stage {ss.label!r} has a single class in training data")
        columns = np.arange(X.shape[1])
        if ss.reducer:
            red = train(ss.reducer["kind"], X, y, ss.reducer.get("hyperparams"),
                        seed=derive_seed(seed, k, 1), n_jobs=n_jobs)
            columns = select_columns(red.importances, ss.reducer.get("keep", 0.95))
        placeholder = StageModel(ss.label, tuple(classes), ss.augment, columns, None)
        Xk = _design(X, placeholder, truth)
        try:
            model = train(ss.model["kind"], Xk, y, ss.model.get("hyperparams"),
                          seed=derive_seed(seed, k), n_jobs=n_jobs)
        except LearnError as exc:
            raise ChainError(f"stage {ss.label!r}: {exc}") from exc
        if model.classes != tuple(classes):
            # pin the declared class order even if some class is absent
            raise ChainError(f"stage {ss.label!r}: training labels do not cover {classes}")
        stages.append(StageModel(ss.label, tuple(classes), ss.augment, columns, model))
        index = {c: i for i, c in enumerate(classes)}
        truth.append(np.eye(len(classes))[[index[v] for v in y]])
    return tuple(stages)


def train_chain(spec: ChainSpec, clips: Sequence[AudioClip], seed: int = 0,
                n_jobs: int = 1) -> TrainedChain:
    """Teacher-forced chain training on segment rows of labelled clips.

    With `spec.validation_fraction` set, a source-disjoint slice is held out
    and the returned chain carries voted per-stage reports on it.
    """
    spec.validate()
    if not clips:
        raise ChainError("no training clips")
    for ss in spec.stages:
        clip_labels(clips, ss.label)
    train_clips, val_clips = list(clips), []
    if spec.validation_fraction:
        train_clips, val_clips = split_by_source(clips, spec.validation_fraction,
                                                 derive_seed(seed, 7) & 0xFFFFFFFF)
    X, owner = featurize_clips(train_clips, spec.feature_config, spec.segments_per_clip,
                               seed, spec.segment_length_s, n_jobs)
    labels = {ss.label: [clip_labels(train_clips, ss.label)[i] for i in owner]
              for ss in spec.stages}
    chain = TrainedChain(spec, _fit_stages(spec, X, labels, seed, n_jobs))
    if val_clips:
        preds = predict_many(chain, val_clips, spec.segments_per_clip, seed)
        reports = evaluate_chain(preds, val_clips)
        chain = TrainedChain(spec, chain.stages, {k: r.to_dict() for k, r in reports.items()})
    return chain


def predict_many(chain: TrainedChain, clips: Sequence[AudioClip],
                 segments_per_clip: int = DEFAULT_SEGMENTS, seed: int = 0,
                 n_jobs: int = 1) -> list[ChainPrediction]:
    if segments_per_clip < 1:
        raise ChainError("segments_per_clip must be positive")
    if not clips:
        return []
    X, owner = featurize_clips(clips, chain.spec.feature_config, segments_per_clip, seed,
                               chain.spec.segment_length_s, n_jobs)
    dists = chain.stage_distributions(X)
    out = []
    for i, c in enumerate(clips):
        rows = owner == i
        out.append(ChainPrediction(
            {st.label: vote(d[rows], st.classes) for st, d in zip(chain.stages, dists)},
            c.source_id))
    return out


def predict_chain(chain: TrainedChain, clip: AudioClip,
                  segments_per_clip: int = DEFAULT_SEGMENTS, seed: int = 0) -> ChainPrediction:
    """Run every stage on each segment of the clip and vote per stage."""
    return predict_many(chain, [clip], segments_per_clip, seed)[0]


def evaluate_chain(predictions: Sequence[ChainPrediction],
                   clips: Sequence[AudioClip]) -> dict[str, EvalReport]:
    """Per-stage clip-level reports from voted distributions."""
    if not predictions:
        raise ChainError("no predictions to evaluate")
    out = {}
    for name, first in predictions[0].stages.items():
        P = np.vstack([p.stages[name].distribution for p in predictions])
        out[name] = evaluate_proba(P, clip_labels(clips, name), first.classes)
    return out

