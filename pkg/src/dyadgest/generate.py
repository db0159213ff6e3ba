"""Sampling gesture motion for a dialogue from a checkpoint."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bvh import MotionClip, SkeletonDef, serialize_bvh
from .checkpoint import load_checkpoint
from .config import RunConfig
from .data import DialogEntry, IngestError, _speaker_files, clip_condition_for_span, load_audio_features, \
    load_tokens
from .denoiser import DenoiserModel, DenoiserParams, forward_batch
from .dialogue import ConditionVector
from .diffusion import NoiseSchedule, X0_CLAMP, cosine_schedule, posterior_step, sample_long
from .motion import NormStats, denormalize, normalize
from .train import params_from_checkpoint, skeleton_from_checkpoint


class SamplingError(RuntimeError):
    pass


@dataclass
class Sampler:
    """Everything sampling needs, read from a checkpoint alone."""

    params: DenoiserParams
    run: RunConfig  # the training-time configuration
    schedule: NoiseSchedule
    motion_stats: NormStats
    audio_stats: NormStats
    skeleton: SkeletonDef
    seed_pool: np.ndarray

    @classmethod
    def from_checkpoint(cls, path) -> "Sampler":
        ckpt = load_checkpoint(path)
        h = ckpt.header
        run = RunConfig(**h["config"])
        return cls(params_from_checkpoint(ckpt), run, cosine_schedule(h["schedule"]["T"], h["schedule"]["s"]),
                   NormStats(h["motion_stats"]["mean"], h["motion_stats"]["std"]),
                   NormStats(h["audio_stats"]["mean"], h["audio_stats"]["std"]),
                   skeleton_from_checkpoint(ckpt), ckpt.tensors["seed_pool"])

    @property
    def n_gen(self) -> int:
        return self.run.gen_len


def num_windows(duration_s: float, fps: int, n_gen: int) -> int:
    return math.ceil(round(duration_s * fps) / n_gen)


def dialog_conditions(sampler: Sampler, entry: DialogEntry, duration_s: float) -> list[ConditionVector]:
    """Per-window conditions covering [k*n_gen - seed_len, (k+1)*n_gen) frames.

    Frames before the start reuse the first audio row; audio shorter than the
    requested span is padded with its last row.
    """
    run = sampler.run
    n_gen, n_seed, fps = run.gen_len, run.seed_len, run.fps
    n_win = num_windows(duration_s, fps, n_gen)
    for spk, files in (("main-agent", entry.main), ("interloctr", entry.inter)):
        if not files.get("wav") and not (run.import_features and files.get("gdaf")):
            raise SamplingError(f"dialog {entry.dialog_id}: missing {spk} audio")
        if not files.get("tsv"):
            raise SamplingError(f"dialog {entry.dialog_id}: missing {spk} transcript")
    total = n_win * n_gen
    a_main = normalize(load_audio_features(entry.main, total, run), sampler.audio_stats)
    a_inter = normalize(load_audio_features(entry.inter, total, run), sampler.audio_stats)
    frame = np.concatenate([a_main, a_inter], axis=1)
    tok_main, tok_inter = load_tokens(entry.main["tsv"]), load_tokens(entry.inter["tsv"])
    conds = []
    for k in range(n_win):
        lo = k * n_gen - n_seed
        rows = np.clip(np.arange(lo, (k + 1) * n_gen), 0, total - 1)
        clip = clip_condition_for_span(tok_main, tok_inter, lo / fps, (k + 1) * n_gen / fps, run)
        conds.append(ConditionVector(frame[rows], clip))
    return conds


def pick_seed(sampler: Sampler, rng: np.random.Generator) -> np.ndarray:
    """A random training seed segment (normalized units)."""
    return sampler.seed_pool[int(rng.integers(len(sampler.seed_pool)))]


def sample_long_batched(params: DenoiserParams, seeds: Sequence[np.ndarray],
                        conds: Sequence[Sequence[ConditionVector]], schedule: NoiseSchedule,
                        rngs: Sequence[np.random.Generator], guidance: float = 1.0, n_gen: int = 120) -> list:
    """Lock-step version of `sample_long` for several dialogues.

    Element b consumes `rngs[b]` exactly as `sample_long` would, so results
    match per-dialogue sampling up to floating-point summation order.
    """
    B = len(seeds)
    D = params.config.motion_dim
    n_seed = params.config.seed_len
    outs: list[list[np.ndarray]] = [[] for _ in range(B)]
    seed = [np.asarray(s) for s in seeds]
    for k in range(max(len(c) for c in conds)):
        active = [b for b in range(B) if k < len(conds[b])]
        frame = np.stack([conds[b][k].frame_part[-n_gen:] for b in active])
        clip = np.stack([conds[b][k].clip_part for b in active])
        sd = np.stack([seed[b] for b in active])
        x = np.stack([rngs[b].standard_normal((n_gen, D)) for b in active])
        on, off = np.zeros(len(active), bool), np.ones(len(active), bool)
        for t in range(schedule.T, 0, -1):
            tt = np.full(len(active), t)
            x0 = forward_batch(params, x, tt, sd, frame, clip, on)
            if guidance != 1.0:
                x0_null = forward_batch(params, x, tt, sd, frame, clip, off)
                x0 = x0_null + guidance * (x0 - x0_null)
            x0 = np.clip(x0, -X0_CLAMP, X0_CLAMP)
            x = np.stack([posterior_step(x[i], x0[i], t, schedule, rngs[b]) for i, b in enumerate(active)])
        for i, b in enumerate(active):
            outs[b].append(x[i])
            seed[b] = x[i][-n_seed:]
    return [np.concatenate(o, axis=0) for o in outs]


def find_dialog(data_root: str, dialog_id: str) -> DialogEntry:
    ddir = os.path.join(data_root, dialog_id)
    if not os.path.isdir(ddir):
        raise SamplingError(f"dialog directory {ddir} not found")
    return DialogEntry(dialog_id, "test", _speaker_files(ddir, "main-agent"), _speaker_files(ddir, "interloctr"))


def sample_dialog(cfg: RunConfig, sampler: Sampler, dialog_id: str, duration_s: float,
                  rng: Optional[np.random.Generator] = None) -> MotionClip:
    """Generate `duration_s` seconds of main-agent motion in raw channel units."""
    run = sampler.run
    if round(duration_s * run.fps) < run.window_len:
        raise SamplingError(f"duration {duration_s}s is shorter than one {run.window_len}-frame window")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    try:
        conds = dialog_conditions(sampler, find_dialog(cfg.data_root, dialog_id), duration_s)
    except IngestError as e:
        raise SamplingError(str(e)) from None
    seed = pick_seed(sampler, rng)
    x = sample_long(DenoiserModel(sampler.params), seed, conds, sampler.schedule, rng, cfg.guidance, run.gen_len)
    n_out = int(round(duration_s * run.fps))
    return MotionClip(denormalize(x[:n_out], sampler.motion_stats), 1.0 / run.fps)


def sample_to_bvh(cfg: RunConfig, checkpoint: Optional[str] = None, dialog_id: Optional[str] = None,
                  duration_s: Optional[float] = None, output: Optional[str] = None) -> str:
    sampler = Sampler.from_checkpoint(checkpoint or cfg.checkpoint)
    clip = sample_dialog(cfg, sampler, dialog_id or cfg.dialog, duration_s or cfg.duration)
    out = output or cfg.output
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out, "w", newline="\n") as f:
        f.write(serialize_bvh(sampler.skeleton, clip))
    return out
