"""Vehicle-descriptor lattice and most-specific model selection.

A descriptor fixes some powertrain attributes and wildcards the rest; a
descriptor generalizes another when every attribute it fixes agrees. For a
query vehicle the registry returns the most specific applicable model with
enough training vehicles, falling back to the universal root model.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import NoApplicableModelError, RegistryError

WILDCARD = "*"
FUELS = ("diesel", "gasoline", "lpg")
CONFIGURATIONS = ("flat", "inline", "vee")
ASPIRATIONS = ("natural", "turbocharged")
ALIASES = {
    "aspiration": {"turbo": "turbocharged", "na": "natural", "naturally_aspirated": "natural"},
    "configuration": {"v": "vee", "i": "inline", "boxer": "flat"},
    "fuel": {"petrol": "gasoline", "gas": "gasoline"},
}
DEFAULT_MIN_N = 3
DISPLACEMENT_STEP_L = 0.1


def canonical_displacement(litres: float) -> float:
    """Snap to the 0.1 L grid, so values within about 0.05 L compare equal."""
    if not litres > 0:
        raise RegistryError("displacement must be positive")
    return round(round(float(litres) / DISPLACEMENT_STEP_L) * DISPLACEMENT_STEP_L, 1)


@dataclass(frozen=True)
class VehicleDescriptor:
    """None (or "*") marks a wildcard attribute."""

    fuel: str | None = None
    configuration: str | None = None
    cylinders: int | None = None
    displacement_l: float | None = None
    aspiration: str | None = None
    make: str | None = None
    instance: str | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v == WILDCARD or v == "":
                v = None
            if v is not None:
                v = self._canonical(f.name, v)
            object.__setattr__(self, f.name, v)

    @staticmethod
    def _canonical(name: str, v):
        if name == "cylinders":
            try:
                n = int(v)
            except (TypeError, ValueError):
                raise RegistryError(f"cylinders must be an integer, got {v!r}") from None
            if n < 1 or n != float(v):
                raise RegistryError(f"cylinders must be a positive integer, got {v!r}")
            return n
        if name == "displacement_l":
            return canonical_displacement(float(v))
        v = str(v).strip().lower()
        v = ALIASES.get(name, {}).get(v, v)
        allowed = {"fuel": FUELS, "configuration": CONFIGURATIONS, "aspiration": ASPIRATIONS}.get(name)
        if allowed and v not in allowed:
            raise RegistryError(f"{name} must be one of {allowed}, got {v!r}")
        return v

    @classmethod
    def attributes(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def values(self) -> tuple:
        return tuple(getattr(self, a) for a in self.attributes())

    @property
    def specificity(self) -> int:
        return sum(v is not None for v in self.values())

    @property
    def is_root(self) -> bool:
        return self.specificity == 0

    def to_dict(self) -> dict:
        return {a: (WILDCARD if v is None else v) for a, v in zip(self.attributes(), self.values())}

    @classmethod
    def from_dict(cls, d: Mapping) -> "VehicleDescriptor":
        unknown = sorted(set(d) - set(cls.attributes()))
        if unknown:
            raise RegistryError(f"unknown descriptor attributes {unknown}")
        return cls(**dict(d))

    def __str__(self) -> str:
        return "(" + ", ".join(WILDCARD if v is None else str(v) for v in self.values()) + ")"


ROOT = VehicleDescriptor()


def generalizes(a: VehicleDescriptor, b: VehicleDescriptor) -> bool:
    """True when every attribute fixed by `a` equals `b`'s (a is ancestor-or-equal of b)."""
    return all(x is None or x == y for x, y in zip(a.values(), b.values()))


def meet(descriptors: Sequence[VehicleDescriptor]) -> VehicleDescriptor:
    """Most specific descriptor generalizing all inputs."""
    if not descriptors:
        return ROOT
    vals = []
    for column in zip(*(d.values() for d in descriptors)):
        vals.append(column[0] if all(v == column[0] for v in column) else None)
    return VehicleDescriptor(*vals)


@dataclass(frozen=True)
class ModelRecord:
    record_id: str
    descriptor: VehicleDescriptor
    kind: str
    n_train: int
    blob: str | None = None          # sha256 of the model bytes in the blob store
    context: dict = field(default_factory=dict)   # required context pattern name -> 0/1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.record_id:
            raise RegistryError("record_id must be non-empty")
        if not self.kind:
            raise RegistryError("diagnostic kind must be non-empty")
        if int(self.n_train) < 1:
            raise RegistryError("n_train must be at least 1")

    def to_dict(self) -> dict:
        return {"record_id": self.record_id, "descriptor": self.descriptor.to_dict(),
                "kind": self.kind, "n_train": int(self.n_train), "blob": self.blob,
                "context": dict(self.context), "meta": dict(self.meta)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelRecord":
        return cls(d["record_id"], VehicleDescriptor.from_dict(d["descriptor"]), d["kind"],
                   int(d["n_train"]), d.get("blob"), dict(d.get("context", {})),
                   dict(d.get("meta", {})))


def _rank(r: ModelRecord):
    return (-r.descriptor.specificity, -r.n_train, r.record_id)


@dataclass(frozen=True)
class Selection:
    record: ModelRecord
    fallback: bool                   # True when the root record was used below min_n
    trace: tuple                     # (record_id, specificity, n_train, verdict)

    def to_dict(self) -> dict:
        return {"record_id": self.record.record_id, "fallback": self.fallback,
                "specificity": self.record.descriptor.specificity,
                "descriptor": self.record.descriptor.to_dict(),
                "trace": [{"record_id": i, "specificity": s, "n_train": n, "verdict": v}
                          for i, s, n, v in self.trace]}


def select_with_trace(query: VehicleDescriptor, kind: str, records: Iterable[ModelRecord],
                      min_n: int = DEFAULT_MIN_N) -> Selection:
    records = list(records)
    if not records:
        raise NoApplicableModelError("registry is empty")
    trace = []
    eligible, roots = [], []
    for r in sorted(records, key=_rank):
        if r.kind != kind:
            verdict = "other kind"
        elif not generalizes(r.descriptor, query):
            verdict = "does not generalize query"
        elif r.n_train < min_n:
            verdict = f"n_train {r.n_train} < min_n {min_n}"
        else:
            verdict = "eligible"
            eligible.append(r)
        if r.kind == kind and r.descriptor.is_root:
            roots.append(r)
        trace.append((r.record_id, r.descriptor.specificity, r.n_train, verdict))
    if eligible:
        return Selection(eligible[0], False, tuple(trace))
    if roots:
        return Selection(roots[0], True, tuple(trace))
    raise NoApplicableModelError(f"no applicable {kind!r} model for {query}")


def select_model(query: VehicleDescriptor, kind: str, records: Iterable[ModelRecord],
                 min_n: int = DEFAULT_MIN_N) -> ModelRecord:
    """Most specific eligible record; ties to larger n_train, then record id.

    Eligible means same kind, descriptor generalizes the query, and
    n_train >= min_n. With none eligible, the root record of the kind is
    returned whatever its n_train.
    """
    if isinstance(records, Registry):
        records = records.records
    return select_with_trace(query, kind, records, min_n).record


# -- identification -------------------------------------------------------

STAGE_ATTRIBUTES = {"fuel": "fuel", "aspiration": "aspiration", "cylinders": "cylinders",
                    "configuration": "configuration", "make": "make"}


def identify(prediction, confidence_floor: float = 0.8,
             short_list: Sequence[VehicleDescriptor] | None = None) -> VehicleDescriptor:
    """Descriptor from confident chain stages, or from a known-vehicle short list.

    A single short-list entry is returned as is. With several, the entries
    consistent with the confident audio attributes are kept; one survivor is
    returned, several are merged to their meet, and the audio attributes
    fill in whatever the meet leaves open.
    """
    if short_list and len(short_list) == 1:
        return short_list[0]
    attrs = {}
    for stage, p in prediction.stages.items():
        attr = STAGE_ATTRIBUTES.get(stage)
        if attr is not None and p.confidence >= confidence_floor:
            attrs[attr] = p.label
    audio = VehicleDescriptor(**attrs)
    if not short_list:
        return audio
    consistent = [d for d in short_list
                  if all(a is None or b is None or a == b for a, b in zip(d.values(), audio.values()))]
    if not consistent:
        return audio
    if len(consistent) == 1:
        return consistent[0]
    m = meet(consistent)
    return VehicleDescriptor(*(x if x is not None else y for x, y in zip(m.values(), audio.values())))


# -- persistent registry --------------------------------------------------

INDEX = "index.json"
BLOBS = "blobs"


class Registry:
    """JSON index plus content-addressed model blobs in a directory.

    Each write produces a new snapshot: the index is rewritten atomically
    with an incremented version, and readers holding an older Registry
    object keep their immutable record list.
    """

    def __init__(self, root: str | os.PathLike, records: Sequence[ModelRecord] = (),
                 version: int = 0):
        self.root = Path(root)
        self.records = tuple(records)
        self.version = version

    @classmethod
    def open(cls, root: str | os.PathLike, create: bool = True) -> "Registry":
        root = Path(root)
        index = root / INDEX
        if not index.exists():
            if not create:
                raise RegistryError(f"no registry at {root}")
            return cls(root)
        doc = json.loads(index.read_text())
        return cls(root, [ModelRecord.from_dict(r) for r in doc["records"]], int(doc["version"]))

    def _write_index(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        doc = {"version": self.version,
               "records": [r.to_dict() for r in sorted(self.records, key=lambda r: r.record_id)]}
        tmp = self.root / (INDEX + ".tmp")
        tmp.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        os.replace(tmp, self.root / INDEX)

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / BLOBS / digest
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return digest

    def get_blob(self, digest: str) -> bytes:
        path = self.root / BLOBS / digest
        if not path.exists():
            raise RegistryError(f"missing blob {digest}")
        data = path.read_bytes()
        if hashlib.sha256(data).hexdigest() != digest:
            raise RegistryError(f"blob {digest} is corrupt")
        return data

    def add(self, descriptor: VehicleDescriptor, kind: str, n_train: int,
            blob: bytes | None = None, record_id: str | None = None,
            context: dict | None = None, meta: dict | None = None) -> ModelRecord:
        digest = self.put_blob(blob) if blob is not None else None
        if record_id is None:
            record_id = f"{kind}-{len(self.records):04d}"
        if any(r.record_id == record_id for r in self.records):
            raise RegistryError(f"record id {record_id!r} already exists")
        rec = ModelRecord(record_id, descriptor, kind, int(n_train), digest, dict(context or {}),
                          dict(meta or {}))
        self.records = self.records + (rec,)
        self.version += 1
        self._write_index()
        return rec

    def query(self, query: VehicleDescriptor, kind: str, min_n: int = DEFAULT_MIN_N) -> Selection:
        return select_with_trace(query, kind, self.records, min_n)

    def snapshot(self) -> "Registry":
        return Registry(self.root, self.records, self.version)

