"""Clip to segment-feature-row plumbing shared by training, grid search and the CLI."""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from .errors import ChainError
from .features import FeatureConfig, extract_matrix, schema_for
from .signal import DEFAULT_SEGMENT_S, AudioClip, segment


def clip_seed(seed: int, clip: AudioClip) -> int:
    """Segment-offset seed that depends on the clip's identity, not its list position."""
    key = f"{clip.source_id}|{clip.capture_position}|{clip.samples.size}".encode()
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(key)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def clip_rows(clip: AudioClip, cfg: FeatureConfig, count: int, seed: int,
              length_s: float = DEFAULT_SEGMENT_S) -> np.ndarray:
    """Feature rows for `count` seeded segments of one clip."""
    return extract_matrix(segment(clip, length_s, count, clip_seed(seed, clip)), cfg)


def featurize_clips(clips: Sequence[AudioClip], cfg: FeatureConfig, segments_per_clip: int,
                    seed: int, length_s: float = DEFAULT_SEGMENT_S,
                    n_jobs: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Stacked rows plus the owning clip index of each row."""
    def one(c):
        return clip_rows(c, cfg, segments_per_clip, seed, length_s)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            blocks = list(ex.map(one, clips))
    else:
        blocks = [one(c) for c in clips]
    if not blocks:
        return np.zeros((0, len(schema_for(cfg)))), np.zeros(0, dtype=np.int64)
    owner = np.repeat(np.arange(len(blocks)), [b.shape[0] for b in blocks])
    return np.vstack(blocks), owner


def clip_labels(clips: Sequence[AudioClip], name: str) -> list[str]:
    out = []
    for c in clips:
        if name not in c.labels:
            raise ChainError(f"clip {c.source_id} has no {name!r} label")
        out.append(str(c.labels[name]))
    return out
