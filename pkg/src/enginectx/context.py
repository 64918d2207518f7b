"""Ternary operating-context vectors and nearest-reference matching.

Each context entry is 1 (yes), 0 (no) or -1 (unknown). Unknown entries,
and entries an algorithm weights at zero, are pruned from the query and
from every reference before a weighted Hamming distance picks the closest
reference context (and with it, the model trained under that context).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d
from scipy.signal import welch

from .errors import ContextError, NoUsableContextError
from .signal import AudioClip

UNKNOWN = -1
DEFAULT_SCHEMA = ("engine_on", "in_gear", "moving", "idling", "straight_line")
CONFIDENT_YES = 0.8
CONFIDENT_NO = 0.2


@dataclass(frozen=True)
class ContextVector:
    names: tuple
    values: tuple

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ContextError("names and values differ in length")
        if len(set(self.names)) != len(self.names):
            raise ContextError("context names must be unique")
        for v in self.values:
            if v not in (-1, 0, 1) or isinstance(v, bool):
                raise ContextError(f"context value {v!r} not in {{-1, 0, 1}}")
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))

    @classmethod
    def from_mapping(cls, m: Mapping[str, int], schema: Sequence[str] | None = None) -> "ContextVector":
        """Schema-ordered vector; schema names missing from `m` become -1."""
        if schema is None:
            schema = tuple(m)
        extra = sorted(set(m) - set(schema))
        if extra:
            raise ContextError(f"names {extra} are not in the context schema")
        return cls(tuple(schema), tuple(int(m.get(n, UNKNOWN)) for n in schema))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name: str) -> int:
        return self.as_dict()[name]


@dataclass(frozen=True)
class ContextWeights:
    weights: Mapping[str, float]
    algorithm: str = "default"

    def __post_init__(self):
        w = {str(k): float(v) for k, v in self.weights.items()}
        if any(not math.isfinite(v) or v < 0 for v in w.values()):
            raise ContextError("weights must be finite and nonnegative")
        if not any(v > 0 for v in w.values()):
            raise ContextError("at least one weight must be positive")
        object.__setattr__(self, "weights", w)

    def get(self, name: str) -> float:
        return self.weights.get(name, 0.0)

    @classmethod
    def uniform(cls, names: Iterable[str], algorithm: str = "default") -> "ContextWeights":
        return cls({n: 1.0 for n in names}, algorithm)

    def scaled(self, alpha: float) -> "ContextWeights":
        return ContextWeights({k: alpha * v for k, v in self.weights.items()}, self.algorithm)


@dataclass(frozen=True)
class ReferenceEntry:
    model_id: str
    context: ContextVector
    n_train: int = 1
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ReferenceContextDB:
    schema: tuple
    entries: tuple

    def __post_init__(self):
        for e in self.entries:
            if e.context.names != self.schema:
                raise ContextError(f"reference {e.model_id!r} does not follow the db schema")
            if UNKNOWN in e.context.values:
                raise ContextError(f"reference {e.model_id!r} has an unknown (-1) entry")

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceContextDB":
        schema = tuple(d["schema"])
        entries = tuple(
            ReferenceEntry(e["model_id"], ContextVector.from_mapping(e["context"], schema),
                           int(e.get("n_train", 1)), dict(e.get("meta", {})))
            for e in d["entries"])
        return cls(schema, entries)

    def to_dict(self) -> dict:
        return {"schema": list(self.schema),
                "entries": [{"model_id": e.model_id, "context": e.context.as_dict(),
                             "n_train": e.n_train, "meta": e.meta} for e in self.entries]}

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ReferenceContextDB":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")


@dataclass(frozen=True)
class Pruned:
    query: ContextVector
    db: ReferenceContextDB
    dropped: tuple          # names removed, in schema order


def prune(query: ContextVector, db: ReferenceContextDB, weights: ContextWeights) -> Pruned:
    """Drop unknown and zero-weight entries from the query and all references."""
    if query.names != db.schema:
        raise ContextError("query schema does not match the reference db schema")
    keep = [i for i, (n, v) in enumerate(zip(query.names, query.values))
            if v != UNKNOWN and weights.get(n) > 0]
    if not keep:
        raise NoUsableContextError("no usable context: every entry is unknown or weighted zero")
    names = tuple(query.names[i] for i in keep)

    def sub(v: ContextVector) -> ContextVector:
        return ContextVector(names, tuple(v.values[i] for i in keep))

    entries = tuple(ReferenceEntry(e.model_id, sub(e.context), e.n_train, e.meta) for e in db.entries)
    dropped = tuple(n for i, n in enumerate(query.names) if i not in set(keep))
    return Pruned(sub(query), ReferenceContextDB(names, entries), dropped)


def weighted_hamming(a: ContextVector, b: ContextVector, weights: ContextWeights) -> float:
    return math.fsum(weights.get(n) for n, x, y in zip(a.names, a.values, b.values) if x != y)


@dataclass(frozen=True)
class MatchResult:
    model_id: str
    distance: float
    margin: float           # second-best minus best; inf with a single candidate
    ranking: tuple          # (model_id, distance, n_train), best first
    dropped: tuple

    def to_dict(self) -> dict:
        return {"model_id": self.model_id, "distance": self.distance,
                "margin": None if math.isinf(self.margin) else self.margin,
                "ranking": [{"model_id": m, "distance": d, "n_train": n} for m, d, n in self.ranking],
                "pruned": list(self.dropped)}


def match_nearest(query: ContextVector, db: ReferenceContextDB, weights: ContextWeights,
                  prefilter: Callable[[ReferenceEntry], bool] | None = None) -> MatchResult:
    """Minimum weighted Hamming reference; ties to larger n_train, then model id.

    `prefilter` optionally restricts the references first, e.g. to contexts
    compatible with external vehicle-bus data.
    """
    pr = prune(query, db, weights)
    entries = [e for e in pr.db.entries if prefilter is None or prefilter(e)]
    if not entries:
        raise ContextError("reference db is empty after filtering")
    scored = sorted(((weighted_hamming(pr.query, e.context, weights), -e.n_train, e.model_id)
                     for e in entries))
    best = scored[0]
    margin = scored[1][0] - best[0] if len(scored) > 1 else math.inf
    ranking = tuple((m, d, -n) for d, n, m in scored)
    return MatchResult(best[2], best[0], margin, ranking, pr.dropped)


def confidence_to_ternary(p: float, yes: float = CONFIDENT_YES, no: float = CONFIDENT_NO) -> int:
    """Map a binary classifier's P(yes) to 1, 0, or -1 when unsure."""
    if not 0.0 <= p <= 1.0:
        raise ContextError(f"probability {p} outside [0, 1]")
    if p >= yes:
        return 1
    if p <= no:
        return 0
    return UNKNOWN


# -- engine-running detector ---------------------------------------------

F0_RANGE_HZ = (5.0, 60.0)
MIN_HARMONICS = 3
COMB_RATIO = 3.0
RATIO_MARGIN = 1.25
ANALYSIS_BAND_HZ = 1000.0


def harmonic_comb_strength(x: np.ndarray, rate: int) -> tuple[float, float]:
    """(best f0, comb ratio) over candidate idle firing frequencies.

    For each candidate fundamental the ratio is the power of its
    MIN_HARMONICS-th strongest harmonic (of the first 8) over the median
    PSD below ANALYSIS_BAND_HZ, both after a 3-bin running max that absorbs
    jitter and non-integer fundamentals, so a passing comb has at least
    MIN_HARMONICS harmonics above the ratio.
    """
    nper = min(x.size, rate // 2)     # 2 Hz resolution
    f, p = welch(x, fs=rate, nperseg=nper, noverlap=nper // 2)
    band = f <= ANALYSIS_BAND_HZ
    # harmonic peaks take a 3-bin max, so the floor does too
    smooth = maximum_filter1d(p, 3, mode="nearest")
    floor = float(np.median(smooth[band]))
    if not floor > 0:
        return 0.0, 0.0
    df = f[1] - f[0]
    best_f0, best_ratio = 0.0, 0.0
    for i0 in range(int(np.ceil(F0_RANGE_HZ[0] / df)), int(F0_RANGE_HZ[1] / df) + 1):
        idx = i0 * np.arange(1, 9)
        idx = idx[idx < p.size]
        peaks = smooth[idx]
        if peaks.size < MIN_HARMONICS:
            continue
        ratio = float(np.sort(peaks)[-MIN_HARMONICS] / floor)
        if ratio > best_ratio:
            best_f0, best_ratio = float(f[i0]), ratio
    return best_f0, best_ratio


def detect_engine_running(clip: AudioClip) -> int:
    """1 for a strong idle firing comb, 0 for broadband or silence, -1 when unsure."""
    x = np.asarray(clip.samples, dtype=np.float64)
    if x.size < clip.sample_rate:
        return UNKNOWN
    if not np.any(x != x[0]):
        return 0
    _, ratio = harmonic_comb_strength(x - x.mean(), clip.sample_rate)
    if ratio >= COMB_RATIO * RATIO_MARGIN:
        return 1
    if ratio < COMB_RATIO / RATIO_MARGIN:
        return 0
    return UNKNOWN
