"""Cosine-schedule Gaussian diffusion with x0 prediction and seeded sampling.

The denoiser is any callable ``(x_t, t, seed, cond, cond_mask) -> x0_hat``.
Seed frames are passed through untouched; they are never noised.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dialogue import ConditionVector
from .motion import TrainingWindow

X0_CLAMP = 8.0

Denoiser = Callable[[np.ndarray, int, np.ndarray, ConditionVector, bool], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    alpha_bar: np.ndarray  # [T + 1], alpha_bar[0] == 1
    alpha: np.ndarray      # [T], alpha[t - 1] is the step t -> t - 1 retention
    beta: np.ndarray       # [T]
    s: float = 0.008


def cosine_schedule(T: int = 1000, s: float = 0.008) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be at least 1")
    t = np.arange(T + 1, dtype=np.float64)
    f = np.cos((t / T + s) / (1 + s) * math.pi / 2) ** 2
    alpha_bar = f / f[0]
    alpha_bar[0] = 1.0
    beta = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 1e-20, 0.999)
    return NoiseSchedule(T, alpha_bar, 1.0 - beta, beta, s)


def schedule_from_alpha_bar(alpha_bar: Sequence[float]) -> NoiseSchedule:
    """Schedule from explicit cumulative products (betas unclamped, for probes)."""
    ab = np.asarray(alpha_bar, dtype=np.float64)
    beta = 1.0 - ab[1:] / ab[:-1]
    return NoiseSchedule(len(ab) - 1, ab, 1.0 - beta, beta, float("nan"))


def _check_t(t, schedule):
    if not 1 <= int(t) <= schedule.T:
        raise ValueError(f"step {t} outside [1, {schedule.T}]")


def q_sample(x0: np.ndarray, t: int, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    if np.shape(noise) != x0.shape:
        raise ValueError(f"noise shape {np.shape(noise)} differs from x0 shape {x0.shape}")
    _check_t(t, schedule)
    ab = schedule.alpha_bar[t]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def draw_timestep(rng: np.random.Generator, T: int) -> int:
    return int(rng.integers(1, T + 1))


def huber_loss(pred: np.ndarray, target: np.ndarray, delta: float = 1.0, reduction: str = "mean") -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    a = np.abs(pred - target)
    per = np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))
    return float(per.mean() if reduction == "mean" else per.sum())


def huber_grad(pred: np.ndarray, target: np.ndarray, delta: float = 1.0, reduction: str = "mean") -> np.ndarray:
    """d huber_loss / d pred."""
    d = np.asarray(pred, dtype=np.float64) - target
    g = np.clip(d, -delta, delta)
    return g / d.size if reduction == "mean" else g


@dataclass
class TrainingDraw:
    t: int
    noise: np.ndarray
    mask: bool
    x_t: np.ndarray


def draw_training_inputs(window: TrainingWindow, rng: np.random.Generator, schedule: NoiseSchedule,
                         p_uncond: float = 0.1) -> TrainingDraw:
    """Draw (t, noise, mask) in that order from `rng` and noise the target frames."""
    t = draw_timestep(rng, schedule.T)
    noise = rng.standard_normal(window.target_frames.shape)
    mask = bool(rng.random() < p_uncond)
    return TrainingDraw(t, noise, mask, q_sample(window.target_frames, t, noise, schedule))


def window_condition(window: TrainingWindow) -> ConditionVector:
    return ConditionVector(window.frame_conditions, window.clip_condition)


def training_step_target(window: TrainingWindow, rng: np.random.Generator, schedule: NoiseSchedule,
                         denoiser: Denoiser, p_uncond: float = 0.1):
    """Returns (x0_hat, target) ready for huber_loss."""
    d = draw_training_inputs(window, rng, schedule, p_uncond)
    x0_hat = denoiser(d.x_t, d.t, window.seed_frames, window_condition(window), d.mask)
    return x0_hat, window.target_frames


def posterior_coefficients(t: int, schedule: NoiseSchedule) -> tuple[float, float, float]:
    """(coef_x0, coef_xt, variance) of q(x_{t-1} | x_t, x0)."""
    _check_t(t, schedule)
    ab_t, ab_prev = schedule.alpha_bar[t], schedule.alpha_bar[t - 1]
    beta, alpha = schedule.beta[t - 1], schedule.alpha[t - 1]
    denom = 1.0 - ab_t
    return (math.sqrt(ab_prev) * beta / denom,
            math.sqrt(alpha) * (1.0 - ab_prev) / denom,
            beta * (1.0 - ab_prev) / denom)


def posterior_step(x_t: np.ndarray, x0_hat: np.ndarray, t: int, schedule: NoiseSchedule,
                   rng: Optional[np.random.Generator]) -> np.ndarray:
    c0, ct, var = posterior_coefficients(t, schedule)
    mean = c0 * x0_hat + ct * x_t
    if t == 1:
        return mean
    return mean + math.sqrt(var) * rng.standard_normal(np.shape(x_t))


def guided_x0(denoiser: Denoiser, x_t, t, seed, cond, guidance: float) -> np.ndarray:
    x0 = denoiser(x_t, t, seed, cond, False)
    if guidance != 1.0:
        x0_null = denoiser(x_t, t, seed, cond, True)
        x0 = x0_null + guidance * (x0 - x0_null)
    return x0


def sample_window(denoiser: Denoiser, seed: np.ndarray, cond: ConditionVector, schedule: NoiseSchedule,
                  rng: np.random.Generator, guidance: float = 1.0, n_gen: int = 120,
                  dim: Optional[int] = None) -> np.ndarray:
    """Ancestral sampling from x_T ~ N(0, I) down to x_0.

    rng consumption: one [n_gen, dim] normal draw for x_T, then one per step
    t = T..2. The null-condition branch consumes nothing, so guidance 1 and
    any other guidance share the same noise stream.
    """
    dim = seed.shape[1] if dim is None else dim
    x = rng.standard_normal((n_gen, dim))
    for t in range(schedule.T, 0, -1):
        x0 = np.clip(guided_x0(denoiser, x, t, seed, cond, guidance), -X0_CLAMP, X0_CLAMP)
        x = posterior_step(x, x0, t, schedule, rng)
    return x


def sample_long(denoiser: Denoiser, initial_seed: np.ndarray, conds: Sequence[ConditionVector],
                schedule: NoiseSchedule, rng: np.random.Generator, guidance: float = 1.0,
                n_gen: int = 120) -> np.ndarray:
    """Chain windows; each later window is seeded by the previous window's last frames."""
    if not conds:
        raise ValueError("need at least one window condition")
    n_seed = initial_seed.shape[0]
    if n_seed > n_gen:
        raise ValueError("seed longer than a generated window cannot be chained")
    seed = initial_seed
    out = []
    for cond in conds:
        x = sample_window(denoiser, seed, cond, schedule, rng, guidance, n_gen)
        out.append(x)
        seed = x[-n_seed:]
    return np.concatenate(out, axis=0)
