"""Motion featurization, normalization statistics and training windows."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bvh import MotionClip

EPS_STD = 1e-6


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be vectors of equal length")
        if np.any(self.std < EPS_STD):
            raise ValueError("std entries must be at least 1e-6")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass
class TrainingWindow:
    seed_frames: np.ndarray
    target_frames: np.ndarray
    frame_conditions: np.ndarray
    clip_condition: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        n = self.seed_frames.shape[0] + self.target_frames.shape[0]
        if self.frame_conditions.shape[0] != n:
            raise ValueError(f"frame_conditions has {self.frame_conditions.shape[0]} rows, expected {n}")
        for a in (self.seed_frames, self.target_frames, self.frame_conditions, self.clip_condition):
            if not np.all(np.isfinite(a)):
                raise ValueError("training window contains non-finite values")


def motion_features(clip: MotionClip) -> np.ndarray:
    """Raw channel values as features (identity map)."""
    if clip.frames.shape[1] == 0:
        raise ValueError("no feature columns")
    return np.array(clip.frames, dtype=np.float64)


def resample(features: np.ndarray, src_fps: float, dst_fps: float) -> np.ndarray:
    """Linear interpolation in time; samples past the last frame clamp to it."""
    if src_fps <= 0 or dst_fps <= 0:
        raise ValueError("frame rates must be positive")
    x = np.asarray(features, dtype=np.float64)
    if src_fps == dst_fps:
        return x.copy()
    n = x.shape[0]
    if n < 2:
        raise ValueError("resampling needs at least 2 frames")
    m = int(np.floor(n * dst_fps / src_fps + 1e-9))
    pos = np.arange(m) * (src_fps / dst_fps)
    lo = np.minimum(np.floor(pos).astype(int), n - 1)
    hi = np.minimum(lo + 1, n - 1)
    w = np.where(lo == n - 1, 0.0, pos - lo)[:, None]
    return (1.0 - w) * x[lo] + w * x[hi]


def fit_norm_stats(all_features: Sequence[np.ndarray]) -> NormStats:
    """Per-column mean and population std over all rows, std floored at 1e-6."""
    mats = [np.atleast_2d(np.asarray(f, dtype=np.float64)) for f in all_features]
    mats = [m for m in mats if m.shape[0] > 0]
    if not mats:
        raise ValueError("cannot fit normalization statistics on empty input")
    x = np.concatenate(mats, axis=0)
    mean = x.mean(axis=0)
    std = np.sqrt(((x - mean) ** 2).mean(axis=0))
    return NormStats(mean, np.maximum(std, EPS_STD))


def _check_dim(features, stats):
    if np.shape(features)[-1] != stats.dim:
        raise ValueError(f"feature width {np.shape(features)[-1]} does not match stats width {stats.dim}")


def normalize(features: np.ndarray, stats: NormStats) -> np.ndarray:
    _check_dim(features, stats)
    return (np.asarray(features, dtype=np.float64) - stats.mean) / stats.std


def denormalize(features: np.ndarray, stats: NormStats) -> np.ndarray:
    _check_dim(features, stats)
    return np.asarray(features, dtype=np.float64) * stats.std + stats.mean


def window_starts(num_frames: int, window_len: int = 150, stride: int = 30) -> list[int]:
    if num_frames < window_len:
        return []
    return list(range(0, num_frames - window_len + 1, stride))


def make_windows(features, frame_conditions, clip_condition, window_len=150, seed_len=30, stride=30,
                 source_id="") -> list[TrainingWindow]:
    """Cut overlapping windows; the first `seed_len` rows of each become the seed.

    `clip_condition` is either one vector shared by every window or a 2-D array
    with one row per emitted window.
    """
    if window_len <= seed_len or seed_len < 0:
        raise ValueError("window_len must exceed seed_len")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    features = np.asarray(features, dtype=np.float64)
    frame_conditions = np.asarray(frame_conditions, dtype=np.float64)
    if features.shape[0] != frame_conditions.shape[0]:
        raise ValueError("features and frame_conditions must have the same number of rows")
    starts = window_starts(features.shape[0], window_len, stride)
    clip_condition = np.asarray(clip_condition, dtype=np.float64)
    if clip_condition.ndim == 2 and clip_condition.shape[0] != len(starts):
        raise ValueError(f"got {clip_condition.shape[0]} clip conditions for {len(starts)} windows")
    out = []
    for k, s in enumerate(starts):
        w = features[s:s + window_len]
        cc = clip_condition[k] if clip_condition.ndim == 2 else clip_condition
        out.append(TrainingWindow(w[:seed_len].copy(), w[seed_len:].copy(),
                                  frame_conditions[s:s + window_len].copy(), cc.copy(),
                                  f"{source_id}@{s}"))
    return out
