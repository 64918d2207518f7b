"""Segment featurization: FFT, MFCC, DWT band and time-domain meta statistics.

Every vector produced under one FeatureConfig shares a single schema in the
canonical family order fft | mfcc | dwt | meta.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.fft import dct, rfft
from scipy.signal import get_window, welch

from .errors import FeatureError
from .signal import CANONICAL_RATE, Segment
from .wavelets import band_energies

FAMILIES = ("fft", "mfcc", "dwt", "meta")
N_OCTAVES = 8
META_FLAGS = ("skewness", "kurtosis", "psd", "zcr")


@dataclass(frozen=True)
class FeatureConfig:
    fft_window: int = 8192
    fft_kept_bins: int = 256
    mel_filters: int = 26
    mfcc_coeffs: int = 13
    frame: int = 2048
    hop: int = 512
    dwt_order: int = 4
    dwt_levels: int = 6
    include_meta: tuple = META_FLAGS

    def __post_init__(self):
        object.__setattr__(self, "include_meta",
                           tuple(f for f in META_FLAGS if f in set(self.include_meta)))
        self.validate()

    def validate(self) -> None:
        if self.fft_window < 2 or self.fft_kept_bins < 1:
            raise FeatureError("fft_window and fft_kept_bins must be positive")
        if self.fft_kept_bins > self.fft_window // 2:
            raise FeatureError("fft_kept_bins must be <= fft_window / 2")
        if not 1 <= self.mfcc_coeffs <= self.mel_filters:
            raise FeatureError("need 1 <= mfcc_coeffs <= mel_filters")
        if self.hop < 1 or self.hop > self.frame:
            raise FeatureError("need 1 <= hop <= frame")
        if self.dwt_levels < 1 or self.dwt_order < 1:
            raise FeatureError("dwt_levels and dwt_order must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["include_meta"] = list(self.include_meta)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        d = dict(d)
        if "include_meta" in d:
            d["include_meta"] = tuple(d["include_meta"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:12]

    def min_samples(self) -> int:
        return max(self.fft_window, self.frame, 1 << self.dwt_levels)


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    schema: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.values) != len(self.schema):
            raise FeatureError("values and schema lengths differ")

    def names(self) -> list[str]:
        return [f"{fam}.{name}" for fam, name in self.schema]


def _as_samples(seg) -> tuple[np.ndarray, int]:
    if isinstance(seg, Segment):
        return seg.samples, seg.sample_rate
    return np.asarray(seg, dtype=np.float64), CANONICAL_RATE


def _moments(v: np.ndarray) -> tuple[float, float, bool]:
    """Biased skewness and excess kurtosis; (0, 0, True) when undefined."""
    mu = v.mean()
    d = v - mu
    m2 = float(d @ d) / v.size
    scale = max(float(np.max(np.abs(v))), 1e-300)
    if m2 <= (1e-12 * scale) ** 2:
        return 0.0, 0.0, True
    m3 = float(np.mean(d ** 3))
    m4 = float(np.mean(d ** 4))
    return m3 / m2 ** 1.5, m4 / m2 ** 2 - 3.0, False


# -- FFT -----------------------------------------------------------------

FFT_META = ("mean", "std", "skew", "kurtosis", "centroid_hz", "rolloff85_hz", "flatness")


def magnitude_spectrum(x: np.ndarray, window: int) -> np.ndarray:
    """Hann-windowed one-sided magnitude spectrum of the first `window` samples."""
    w = get_window("hann", window, fftbins=True)
    return np.abs(rfft(x[:window] * w))


def spectral_flatness(power: np.ndarray) -> float:
    """Geometric over arithmetic mean of a power spectrum."""
    if power.size == 0 or not np.any(power > 0):
        return 0.0
    floor = 1e-12 * float(power.max())
    p = np.maximum(power, floor)
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))


def fft_features(seg, cfg: FeatureConfig) -> np.ndarray:
    x, rate = _as_samples(seg)
    if x.size < cfg.fft_window:
        raise FeatureError(f"segment has {x.size} samples, fft_window needs {cfg.fft_window}")
    mag = magnitude_spectrum(x, cfg.fft_window)
    power = mag ** 2
    freqs = np.arange(mag.size) * rate / cfg.fft_window
    skew, kurt, _ = _moments(mag)
    total = float(mag.sum())
    if total > 0:
        centroid = float(freqs @ mag) / total
        cum = np.cumsum(power)
        rolloff = float(freqs[np.searchsorted(cum, 0.85 * cum[-1])])
    else:
        centroid = rolloff = 0.0
    meta = [mag.mean(), mag.std(), skew, kurt, centroid, rolloff, spectral_flatness(power)]
    return np.concatenate([mag[:cfg.fft_kept_bins], meta])


# -- MFCC ----------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(n_filters: int, n_fft: int, rate: int) -> np.ndarray:
    """Triangular filters spaced evenly on the mel scale from 0 Hz to rate/2."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(rate / 2.0), n_filters + 2))
    freqs = np.arange(n_fft // 2 + 1) * rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    fb.setflags(write=False)
    return fb


def mfcc_frames(seg, cfg: FeatureConfig) -> np.ndarray:
    """Per-frame MFCCs, shape (n_frames, mfcc_coeffs)."""
    x, rate = _as_samples(seg)
    if x.size < cfg.frame:
        raise FeatureError(f"segment has {x.size} samples, one frame needs {cfg.frame}")
    n_frames = 1 + (x.size - cfg.frame) // cfg.hop
    idx = np.arange(cfg.frame)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * get_window("hann", cfg.frame, fftbins=True)
    power = np.abs(rfft(frames, axis=1)) ** 2
    energies = power @ mel_filterbank(cfg.mel_filters, cfg.frame, rate).T
    # floor relative to the segment maximum keeps gain changes additive after log
    floor = max(1e-12 * float(energies.max()), 1e-300)
    logmel = np.log(np.maximum(energies, floor))
    return dct(logmel, type=2, norm="ortho", axis=1)[:, :cfg.mfcc_coeffs]


def mfcc(seg, cfg: FeatureConfig) -> np.ndarray:
    c = mfcc_frames(seg, cfg)
    return np.concatenate([c.mean(axis=0), c.std(axis=0)])


# -- DWT -----------------------------------------------------------------

def dwt_features(seg, cfg: FeatureConfig) -> np.ndarray:
    x, _ = _as_samples(seg)
    if x.size < (1 << cfg.dwt_levels):
        raise FeatureError(f"{x.size} samples is too few for {cfg.dwt_levels} DWT levels")
    e = band_energies(x, cfg.dwt_order, cfg.dwt_levels)
    total = e.sum()
    frac = e / total if total > 0 else np.zeros_like(e)
    return np.column_stack([e, np.log(e + 1e-12), frac]).ravel()


# -- time-domain meta statistics -----------------------------------------

def octave_edges(rate: int) -> np.ndarray:
    """Band edges [0, nyq/2^7, ..., nyq/2, nyq] (N_OCTAVES bands)."""
    nyq = rate / 2.0
    return np.concatenate([[0.0], nyq / 2.0 ** np.arange(N_OCTAVES - 1, -1, -1)])


def zero_crossings(x: np.ndarray) -> int:
    s = np.signbit(x)
    return int(np.count_nonzero(s[1:] != s[:-1]))


def meta_stats(seg, flags: Sequence[str] = META_FLAGS) -> np.ndarray:
    x, rate = _as_samples(seg)
    if x.size == 0:
        raise FeatureError("empty segment")
    flags = set(flags)
    out = []
    skew, kurt, constant = _moments(x)
    if "skewness" in flags:
        out.append(skew)
    if "kurtosis" in flags:
        out.append(kurt)
    if "skewness" in flags or "kurtosis" in flags:
        out.append(float(constant))
    if "psd" in flags:
        if x.size >= 18:
            nper = 2 * x.size // 9  # 8 half-overlapping frames
            f, p = welch(x, fs=rate, window="hann", nperseg=nper, noverlap=nper // 2)
            df = f[1] - f[0]
        else:
            f, p, df = np.array([0.0]), np.array([float(np.mean(x ** 2))]), 1.0
        edges = octave_edges(rate)
        bands = []
        for i in range(N_OCTAVES):
            sel = (f >= edges[i]) & ((f < edges[i + 1]) | (i == N_OCTAVES - 1))
            bands.append(float(p[sel].sum() * df))
        out.append(float(p.sum() * df))
        out.extend(bands)
    if "zcr" in flags:
        n = zero_crossings(x)
        out.extend([n * rate / x.size, float(n)])
    return np.asarray(out, dtype=np.float64)


# -- schema and extraction -----------------------------------------------

@lru_cache(maxsize=64)
def schema_for(cfg: FeatureConfig) -> tuple:
    names = [("fft", f"mag_{k:04d}") for k in range(cfg.fft_kept_bins)]
    names += [("fft", m) for m in FFT_META]
    names += [("mfcc", f"c{k:02d}_mean") for k in range(cfg.mfcc_coeffs)]
    names += [("mfcc", f"c{k:02d}_std") for k in range(cfg.mfcc_coeffs)]
    bands = [f"d{l}" for l in range(1, cfg.dwt_levels + 1)] + [f"a{cfg.dwt_levels}"]
    for b in bands:
        names += [("dwt", f"{b}_energy"), ("dwt", f"{b}_log_energy"), ("dwt", f"{b}_fraction")]
    flags = cfg.include_meta
    if "skewness" in flags:
        names.append(("meta", "skewness"))
    if "kurtosis" in flags:
        names.append(("meta", "kurtosis"))
    if "skewness" in flags or "kurtosis" in flags:
        names.append(("meta", "constant"))
    if "psd" in flags:
        names.append(("meta", "psd_total"))
        names += [("meta", f"psd_oct{k}") for k in range(N_OCTAVES)]
    if "zcr" in flags:
        names += [("meta", "zcr_rate_hz"), ("meta", "zcr_count")]
    return tuple(names)


def extract(seg, cfg: FeatureConfig | None = None) -> FeatureVector:
    cfg = cfg or FeatureConfig()
    x, _ = _as_samples(seg)
    if x.size < cfg.min_samples():
        raise FeatureError(f"segment has {x.size} samples, config needs {cfg.min_samples()}")
    if not np.all(np.isfinite(x)):
        raise FeatureError("segment has non-finite samples")
    values = np.concatenate([
        fft_features(seg, cfg),
        mfcc(seg, cfg),
        dwt_features(seg, cfg),
        meta_stats(seg, cfg.include_meta),
    ])
    if not np.all(np.isfinite(values)):
        raise FeatureError("non-finite feature value")
    return FeatureVector(values, schema_for(cfg))


def extract_matrix(segments: Iterable, cfg: FeatureConfig | None = None) -> np.ndarray:
    cfg = cfg or FeatureConfig()
    rows = [extract(s, cfg).values for s in segments]
    if not rows:
        return np.zeros((0, len(schema_for(cfg))))
    return np.vstack(rows)


# -- dumps ---------------------------------------------------------------

def dump_stem(cfg: FeatureConfig, prefix: str = "features") -> str:
    return f"{prefix}-{cfg.digest()}"


def write_csv(path: str | os.PathLike, matrix: np.ndarray, cfg: FeatureConfig,
              row_meta: Sequence[dict] | None = None) -> Path:
    """CSV dump; header = optional metadata columns then schema names."""
    path = Path(path)
    names = [f"{fam}.{n}" for fam, n in schema_for(cfg)]
    meta_cols = sorted({k for m in (row_meta or []) for k in m})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(meta_cols + names)
        for i, row in enumerate(matrix):
            meta = row_meta[i] if row_meta else {}
            w.writerow([meta.get(k, "") for k in meta_cols] + [repr(float(v)) for v in row])
    return path


def write_matrix(stem: str | os.PathLike, matrix: np.ndarray, cfg: FeatureConfig,
                 row_meta: Sequence[dict] | None = None) -> tuple[Path, Path]:
    """Little-endian float64 matrix plus a JSON schema sidecar."""
    stem = Path(stem)
    bin_path, json_path = stem.with_suffix(".f64"), stem.with_suffix(".json")
    m = np.ascontiguousarray(matrix, dtype="<f8")
    bin_path.write_bytes(m.tobytes())
    header = {
        "shape": list(m.shape),
        "dtype": "<f8",
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "schema": [f"{fam}.{n}" for fam, n in schema_for(cfg)],
        "rows": list(row_meta or []),
    }
    json_path.write_text(json.dumps(header, indent=1, sort_keys=True) + "\n")
    return bin_path, json_path


def read_matrix(stem: str | os.PathLike) -> tuple[np.ndarray, dict]:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    data = np.frombuffer(stem.with_suffix(".f64").read_bytes(), dtype=header["dtype"])
    return data.reshape(header["shape"]).astype(np.float64), header
