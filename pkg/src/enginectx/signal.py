"""Audio ingestion, randomized segmentation and leakage-safe splitting."""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import (
    ClipTooShortError,
    EmptyAudioError,
    SilentClipError,
    SplitError,
    UnreadableAudioError,
    UnsupportedEncodingError,
)

CANONICAL_RATE = 22050
DEFAULT_SEGMENT_S = 1.0
CAPTURE_POSITIONS = ("underhood", "closed_hood", "exhaust", "unknown")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str
    capture_position: str = "unknown"
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not self.source_id:
            raise ValueError("source_id must be non-empty")
        if self.capture_position not in CAPTURE_POSITIONS:
            raise ValueError(f"unknown capture position {self.capture_position!r}")
        if self.samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def metadata(self) -> dict:
        return {
            "source_id": self.source_id,
            "labels": dict(self.labels),
            "capture_position": self.capture_position,
        }


@dataclass(frozen=True, eq=False)
class Segment:
    samples: np.ndarray
    parent: str
    offset_s: float
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen(self.samples))

    def manifest_entry(self) -> dict:
        return {
            "parent": self.parent,
            "offset_s": self.offset_s,
            "n_samples": int(self.samples.size),
            "sample_rate": self.sample_rate,
        }


def _decode_pcm(data: np.ndarray) -> np.ndarray:
    """Map integer or float PCM to float64 in [-1, 1] by encoding full scale."""
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise UnsupportedEncodingError(f"unsupported sample type {data.dtype}")


def sidecar_path(path: str | os.PathLike) -> Path:
    return Path(path).with_suffix(".json")


def normalize_samples(samples: np.ndarray, rate: int) -> np.ndarray:
    """Downmix, resample to the canonical rate and peak-normalize."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise EmptyAudioError("zero-length audio")
    if rate != CANONICAL_RATE:
        g = math.gcd(int(rate), CANONICAL_RATE)
        x = resample_poly(x, CANONICAL_RATE // g, int(rate) // g)
    if not np.all(np.isfinite(x)):
        raise UnsupportedEncodingError("non-finite samples")
    peak = np.max(np.abs(x))
    if peak == 0.0:
        raise SilentClipError("silent clip")
    if np.ptp(x) == 0.0:
        raise SilentClipError("clipped-flat clip (constant signal)")
    return x / peak


def ingest(path: str | os.PathLike) -> AudioClip:
    """Read a WAV file (plus optional JSON sidecar) into a canonical clip."""
    path = Path(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise UnreadableAudioError(f"{path}: no such file") from exc
    except ValueError as exc:
        msg = str(exc)
        if "Unknown wave file format" in msg or "Unsupported bit depth" in msg:
            raise UnsupportedEncodingError(f"{path}: {msg}") from exc
        raise UnreadableAudioError(f"{path}: {msg}") from exc
    except (OSError, EOFError) as exc:
        raise UnreadableAudioError(f"{path}: {exc}") from exc

    if data.size == 0:
        raise EmptyAudioError(f"{path}: zero-length audio")
    samples = normalize_samples(_decode_pcm(data), int(rate))

    meta = {}
    side = sidecar_path(path)
    if side.exists():
        with open(side) as fh:
            meta = json.load(fh)
    return AudioClip(
        samples=samples,
        sample_rate=CANONICAL_RATE,
        source_id=str(meta.get("source_id") or path.stem),
        capture_position=meta.get("capture_position", "unknown"),
        labels=dict(meta.get("labels", {})),
    )


def ingest_many(paths: Iterable[str | os.PathLike], n_jobs: int = 1) -> list[AudioClip]:
    """Ingest several files; output order follows the sorted paths."""
    ordered = sorted(Path(p) for p in paths)
    if n_jobs <= 1:
        return [ingest(p) for p in ordered]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(ingest, ordered))


def write_wav(clip: AudioClip, path: str | os.PathLike, sidecar: bool = True) -> Path:
    """Write a clip as 16-bit PCM WAV and, optionally, its JSON sidecar."""
    path = Path(path)
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0) * 32767.0).astype(np.int16)
    wavfile.write(path, clip.sample_rate, pcm)
    if sidecar:
        with open(sidecar_path(path), "w") as fh:
            json.dump(clip.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return path


def segment(clip: AudioClip, length_s: float = DEFAULT_SEGMENT_S, count: int = 1,
            seed: int = 0) -> list[Segment]:
    """Cut `count` fixed-length segments at seeded uniform random offsets.

    Offsets are drawn on the sample grid from [0, n - L]; segments may overlap.
    """
    if count < 1:
        raise ValueError("count must be positive")
    n_seg = int(round(length_s * clip.sample_rate))
    if n_seg < 1:
        raise ValueError("segment length must cover at least one sample")
    if clip.samples.size < n_seg:
        raise ClipTooShortError(
            f"clip {clip.source_id} is {clip.duration_s:.3f} s, shorter than {length_s} s")
    rng = np.random.default_rng(seed)
    starts = rng.integers(0, clip.samples.size - n_seg + 1, size=count)
    return [
        Segment(clip.samples[s:s + n_seg], clip.source_id, float(s) / clip.sample_rate,
                clip.sample_rate)
        for s in starts
    ]


def split_by_source(clips: Sequence[AudioClip], test_fraction: float = 0.3,
                    seed: int = 0) -> tuple[list[AudioClip], list[AudioClip]]:
    """Partition clips so that no source vehicle appears on both sides.

    Sources are shuffled and moved into the test side until the test clip
    count reaches round(test_fraction * n_clips); each side keeps at least
    one source. Clip order within each side follows the input order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    sources = sorted({c.source_id for c in clips})
    if len(sources) < 2:
        raise SplitError("need at least 2 distinct sources to split")
    per_source: dict[str, int] = {}
    for c in clips:
        per_source[c.source_id] = per_source.get(c.source_id, 0) + 1

    order = np.random.default_rng(seed).permutation(len(sources))
    target = round(test_fraction * len(clips))
    test_sources: set[str] = set()
    n_test = 0
    for i in order:
        if len(test_sources) >= len(sources) - 1:
            break
        if test_sources and n_test >= target:
            break
        test_sources.add(sources[i])
        n_test += per_source[sources[i]]

    train = [c for c in clips if c.source_id not in test_sources]
    test = [c for c in clips if c.source_id in test_sources]
    return train, test


def write_segment_manifest(segments: Iterable[Segment], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for s in segments:
            fh.write(json.dumps(s.manifest_entry(), sort_keys=True) + "\n")


def read_segment_manifest(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
