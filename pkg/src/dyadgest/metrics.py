"""Objective motion metrics and the evaluation report."""
from __future__ import annotations

import csv
import logging
import os
from typing import Optional

import numpy as np
from scipy.stats import spearmanr

from .config import RunConfig
from .data import build_index, extract_dialog, load_tokens
from .dialogue import stub_emotion_provider
from .generate import Sampler, dialog_conditions, pick_seed, sample_long_batched
from .motion import denormalize
from .toy import read_toy_meta

log = logging.getLogger(__name__)


def mean_abs_jerk(motion: np.ndarray) -> float:
    """Mean absolute third finite difference over frames and channels."""
    m = np.asarray(motion, dtype=np.float64)
    if m.shape[0] < 4:
        raise ValueError("jerk needs at least 4 frames")
    return float(np.abs(np.diff(m, n=3, axis=0)).mean())


def velocity_magnitudes(motion: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(np.asarray(motion, dtype=np.float64), axis=0), axis=1)


def histogram_wasserstein(a, b, bins: int = 64) -> float:
    """1-Wasserstein distance between the 64-bin histograms of two samples (shared bin edges)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    ha, _ = np.histogram(a, edges)
    hb, _ = np.histogram(b, edges)
    cdf_gap = np.cumsum(ha / ha.sum() - hb / hb.sum())
    return float(np.abs(cdf_gap[:-1]).sum() * (edges[1] - edges[0]))


def boundary_discontinuity(motion: np.ndarray, n_gen: int) -> float:
    """Mean |frame[j] - frame[j-1]| over channels at every window join j = k * n_gen."""
    m = np.asarray(motion, dtype=np.float64)
    joins = np.arange(n_gen, m.shape[0], n_gen)
    if joins.size == 0:
        return 0.0
    return float(np.abs(m[joins] - m[joins - 1]).mean())


def motion_amplitude(motion: np.ndarray) -> float:
    """Mean over channels of the temporal standard deviation."""
    return float(np.asarray(motion, dtype=np.float64).std(axis=0).mean())


def condition_response(intensities, amplitudes) -> float:
    rho = spearmanr(intensities, amplitudes).statistic
    return float(rho)


def _planted_positive(root: str, entry, meta: dict) -> float:
    if entry.dialog_id in meta:
        return float(meta[entry.dialog_id]["positive_main"])
    words = " ".join(t.word for t in load_tokens(entry.main["tsv"]) if not t.is_laughter)
    return stub_emotion_provider(words).positive


def evaluate(cfg: RunConfig, checkpoint: Optional[str] = None, split: Optional[str] = None,
             report: Optional[str] = None, batch: int = 32) -> list[dict]:
    """Sample every dialogue of a split and score it. Writes a CSV report; returns its rows.

    The last row (dialog_id "ALL") holds means and the Spearman condition-response slope.
    """
    sampler = Sampler.from_checkpoint(checkpoint or cfg.checkpoint)
    run = sampler.run
    split = split or cfg.split
    index = build_index(cfg.data_root)
    entries = index.by_split(split)
    if not entries:
        raise ValueError(f"split {split!r} has no dialogs under {cfg.data_root}")
    meta = read_toy_meta(cfg.data_root)

    refs, conds, durations = [], [], []
    for e in entries:
        df = extract_dialog(e, run)
        refs.append(df.motion)
        durations.append(df.n_frames / run.fps)
        conds.append(dialog_conditions(sampler, e, durations[-1]))
    if any(r is None for r in refs):
        log.warning("split %s lacks reference motion for some dialogs; jerk and velocity metrics skipped there",
                    split)

    rng = np.random.default_rng(cfg.seed)
    rngs = [np.random.default_rng([cfg.seed, i]) for i in range(len(entries))]
    seeds = [pick_seed(sampler, rng) for _ in entries]
    generated = []
    for s in range(0, len(entries), batch):
        sl = slice(s, s + batch)
        generated += sample_long_batched(sampler.params, seeds[sl], conds[sl], sampler.schedule, rngs[sl],
                                         cfg.guidance, run.gen_len)

    rows = []
    for e, ref, gen, dur in zip(entries, refs, generated, durations):
        n = int(round(dur * run.fps))
        gen = denormalize(gen[:n], sampler.motion_stats)
        row = {"dialog_id": e.dialog_id, "frames": n,
               "planted_positive": _planted_positive(cfg.data_root, e, meta),
               "amplitude": motion_amplitude(gen),
               "boundary_discontinuity": boundary_discontinuity(gen, run.gen_len),
               "jerk_generated": mean_abs_jerk(gen)}
        if ref is not None:
            ref = ref[:n]
            row["jerk_reference"] = mean_abs_jerk(ref)
            row["jerk_ratio"] = row["jerk_generated"] / row["jerk_reference"] if row["jerk_reference"] else np.nan
            row["velocity_w1"] = histogram_wasserstein(velocity_magnitudes(gen), velocity_magnitudes(ref))
            row["amplitude_reference"] = motion_amplitude(ref)
        rows.append(row)

    keys = ["frames", "planted_positive", "amplitude", "boundary_discontinuity", "jerk_generated",
            "jerk_reference", "jerk_ratio", "velocity_w1", "amplitude_reference"]
    agg = {"dialog_id": "ALL"}
    for k in keys:
        vals = [r[k] for r in rows if k in r]
        if vals:
            agg[k] = float(np.mean(vals))
    agg["condition_spearman"] = condition_response([r["planted_positive"] for r in rows],
                                                   [r["amplitude"] for r in rows]) if len(rows) > 2 else np.nan
    rows.append(agg)

    out = report or cfg.report
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["dialog_id"] + keys + ["condition_spearman"], lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return rows
