"""Training loop and checkpoint assembly."""
from __future__ import annotations

import csv
import dataclasses
import logging
import math
from typing import Optional, Sequence

import numpy as np

from .bvh import SkeletonDef, parse_hierarchy, serialize_hierarchy
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import IngestedData, load_ingested
from .denoiser import DenoiserConfig, DenoiserParams, backward, forward_batch, init_params, optimizer_step, param_shapes
from .dialogue import clip_layout
from .diffusion import NoiseSchedule, cosine_schedule, draw_training_inputs, huber_grad, huber_loss
from .motion import NormStats, TrainingWindow

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def make_batch(windows: Sequence[TrainingWindow], rng: np.random.Generator, schedule: NoiseSchedule,
               p_uncond: float):
    """Stack windows and draw (t, noise, mask) per window, in window order."""
    draws = [draw_training_inputs(w, rng, schedule, p_uncond) for w in windows]
    n_gen = windows[0].target_frames.shape[0]
    return dict(
        x_t=np.stack([d.x_t for d in draws]),
        t=np.array([d.t for d in draws]),
        seed=np.stack([w.seed_frames for w in windows]),
        frame=np.stack([w.frame_conditions[-n_gen:] for w in windows]),
        clip=np.stack([w.clip_condition for w in windows]),
        mask=np.array([d.mask for d in draws]),
        target=np.stack([w.target_frames for w in windows]),
    )


def loss_and_grads(params: DenoiserParams, batch: dict, delta: float = 1.0):
    pred, cache = forward_batch(params, batch["x_t"], batch["t"], batch["seed"], batch["frame"],
                                batch["clip"], batch["mask"], record=True)
    loss = huber_loss(pred, batch["target"], delta)
    grads = backward(params, cache, huber_grad(pred, batch["target"], delta))
    return loss, grads


def grad_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def build_checkpoint(cfg: RunConfig, params: DenoiserParams, motion_stats: NormStats, audio_stats: NormStats,
                     skeleton: SkeletonDef, seed_pool: np.ndarray) -> Checkpoint:
    header = {
        "format": "dyadgest-checkpoint",
        "config": dataclasses.asdict(cfg),
        "denoiser": dataclasses.asdict(params.config),
        "schedule": {"kind": "cosine", "T": cfg.T, "s": cfg.schedule_s},
        "motion_stats": {"mean": motion_stats.mean.tolist(), "std": motion_stats.std.tolist()},
        "audio_stats": {"mean": audio_stats.mean.tolist(), "std": audio_stats.std.tolist()},
        "condition_layout": {"frame": [["audio_main", cfg.audio_dim], ["audio_inter", cfg.audio_dim]],
                             "clip": [list(x) for x in clip_layout(cfg.context_dim)]},
        "skeleton": serialize_hierarchy(skeleton),
        "frame_time": 1.0 / cfg.fps,
        "step": params.step,
    }
    tensors = {f"param/{k}": w for k, w in params.weights.items()}
    tensors.update({f"adam_m/{k}": a for k, a in params.m.items()})
    tensors.update({f"adam_v/{k}": a for k, a in params.v.items()})
    tensors["seed_pool"] = seed_pool
    return Checkpoint(header, tensors)


def params_from_checkpoint(ckpt: Checkpoint) -> DenoiserParams:
    cfg = DenoiserConfig(**ckpt.header["denoiser"])
    names = param_shapes(cfg)
    weights = {k: ckpt.tensors[f"param/{k}"] for k in names}
    m = {k: ckpt.tensors[f"adam_m/{k}"] for k in names}
    v = {k: ckpt.tensors[f"adam_v/{k}"] for k in names}
    return DenoiserParams(cfg, weights, m, v, int(ckpt.header["step"]))


def skeleton_from_checkpoint(ckpt: Checkpoint) -> SkeletonDef:
    return parse_hierarchy(ckpt.header["skeleton"])


def train(cfg: RunConfig, data: Optional[IngestedData] = None, log_rows: Optional[list] = None,
          on_step=None) -> DenoiserParams:
    """Run the optimisation loop; writes the CSV log and checkpoints as configured.

    Returns the final parameters. `log_rows`, when given, receives
    (step, loss, grad_norm) tuples.
    """
    if data is None:
        data = load_ingested(cfg)
    if not data.windows:
        raise TrainingError("no training windows; is the data at least one window long?")
    windows = data.windows
    motion_dim = windows[0].target_frames.shape[1]
    params = init_params(cfg.denoiser_config(motion_dim), cfg.seed)
    schedule = cosine_schedule(cfg.T, cfg.schedule_s)
    rng = np.random.default_rng(cfg.seed)
    seed_pool = np.stack([w.seed_frames for w in windows if data.split_of(w) == "train"])

    def save():
        if cfg.checkpoint:
            save_checkpoint(cfg.checkpoint, build_checkpoint(cfg, params, data.motion_stats, data.audio_stats,
                                                             data.skeleton, seed_pool))

    logf = open(cfg.log_path, "w", newline="") if cfg.log_path else None
    writer = csv.writer(logf, lineterminator="\n") if logf else None
    if writer:
        writer.writerow(["step", "loss", "grad_norm"])
    try:
        for step in range(cfg.steps):
            idx = rng.choice(len(windows), size=cfg.batch_size, replace=len(windows) < cfg.batch_size)
            batch = make_batch([windows[i] for i in idx], rng, schedule, cfg.p_uncond)
            loss, grads = loss_and_grads(params, batch, cfg.huber_delta)
            gn = grad_norm(grads)
            if not (math.isfinite(loss) and math.isfinite(gn)):
                raise TrainingError(f"non-finite loss {loss} or gradient norm {gn} at step {step}")
            optimizer_step(params, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay)
            if not all(np.all(np.isfinite(w)) for w in params.weights.values()):
                raise TrainingError(f"parameters became non-finite at step {step}")
            if writer:
                writer.writerow([step, repr(loss), repr(gn)])
            if log_rows is not None:
                log_rows.append((step, loss, gn))
            if on_step is not None:
                on_step(step, loss, gn)
            if (step + 1) % cfg.checkpoint_every == 0 and step + 1 < cfg.steps:
                save()
            if step % 100 == 0:
                if logf:
                    logf.flush()
                log.info("step %d loss %.5f grad_norm %.4f", step, loss, gn)
    finally:
        if logf:
            logf.close()
    save()
    return params


def load_model(path):
    ckpt = load_checkpoint(path)
    return ckpt, params_from_checkpoint(ckpt)
