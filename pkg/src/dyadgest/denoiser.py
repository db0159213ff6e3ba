"""Residual-MLP denoiser with a depthwise temporal convolution.

Per frame the network sees [x_t | frame audio | clip condition | time
embedding | seed summary]. Everything after the input projection is
per-frame except the depthwise convolution, which is the only temporal
mixing. Gradients are written out by hand; all maths is float64.

Shapes (batched): x_t [B, N, D_m], t [B], seed [B, N_seed, D_m],
frame [B, N, 2 D_a], clip [B, C], mask [B].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dialogue import ConditionVector, clip_dim

GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class DenoiserConfig:
    motion_dim: int
    audio_dim: int = 27
    context_dim: int = 64
    seed_len: int = 30
    hidden: int = 256
    depth: int = 4
    time_dim: int = 64
    seed_summary_dim: int = 128
    kernel: int = 5

    def __post_init__(self):
        for name in ("motion_dim", "audio_dim", "context_dim", "seed_len", "hidden", "depth",
                     "time_dim", "seed_summary_dim", "kernel"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.kernel % 2 == 0:
            raise ValueError("kernel must be odd")
        if self.time_dim % 2:
            raise ValueError("time_dim must be even")

    @property
    def clip_dim(self) -> int:
        return clip_dim(self.context_dim)

    @property
    def input_blocks(self) -> list[tuple[str, int]]:
        return [("x", self.motion_dim), ("frame", 2 * self.audio_dim), ("clip", self.clip_dim),
                ("time", self.time_dim), ("seed", self.seed_summary_dim)]

    @property
    def input_dim(self) -> int:
        return sum(n for _, n in self.input_blocks)


@dataclass
class DenoiserParams:
    config: DenoiserConfig
    weights: dict[str, np.ndarray]
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    version: int = 0  # bumped on every in-place update; ties caches to a snapshot

    def __post_init__(self):
        for k, w in self.weights.items():
            self.m.setdefault(k, np.zeros_like(w))
            self.v.setdefault(k, np.zeros_like(w))

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.config, {k: w.copy() for k, w in self.weights.items()},
                              {k: a.copy() for k, a in self.m.items()},
                              {k: a.copy() for k, a in self.v.items()}, self.step)


def param_shapes(cfg: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    H = cfg.hidden
    shapes = {
        "seed_w": (cfg.seed_len * cfg.motion_dim, cfg.seed_summary_dim),
        "seed_b": (cfg.seed_summary_dim,),
        "in_w": (cfg.input_dim, H),
        "in_b": (H,),
    }
    for i in range(cfg.depth):
        shapes.update({f"block{i}_w1": (H, H), f"block{i}_b1": (H,),
                       f"block{i}_w2": (H, H), f"block{i}_b2": (H,)})
    shapes.update({"conv_w": (cfg.kernel, H), "conv_b": (H,),
                   "out_w": (H, cfg.motion_dim), "out_b": (cfg.motion_dim,),
                   "null_clip": (cfg.clip_dim,)})
    return shapes


def is_decayed(name: str) -> bool:
    """Weight decay applies to weight matrices and conv taps, not biases or the null embedding."""
    return name.endswith(("_w", "_w1", "_w2"))


def init_params(config: DenoiserConfig, rng_seed: int) -> DenoiserParams:
    """Glorot-uniform weights, zero biases and null embedding.

    Conv taps use fan_in = fan_out = kernel. The output projection is drawn
    (to keep the rng stream fixed) and then zeroed, so a fresh model predicts
    x0 = 0 and the first-step loss is the Huber of the data itself.
    """
    rng = np.random.default_rng(rng_seed)
    weights = {}
    for name, shape in param_shapes(config).items():
        if is_decayed(name):
            fan_in, fan_out = (shape[0], shape[0]) if name == "conv_w" else shape
            a = math.sqrt(6.0 / (fan_in + fan_out))
            weights[name] = rng.uniform(-a, a, size=shape)
        else:
            weights[name] = np.zeros(shape)
    weights["out_w"][...] = 0.0
    return DenoiserParams(config, weights)


def time_embedding(t, T: Optional[int], time_dim: int) -> np.ndarray:
    """Interleaved (sin, cos) pairs with frequencies 10000^(-2k/time_dim).

    `t` may be a scalar or a vector of steps; T is accepted for interface
    symmetry and does not rescale t.
    """
    if time_dim % 2:
        raise ValueError("time_dim must be even")
    t = np.asarray(t, dtype=np.float64)
    k = np.arange(time_dim // 2)
    omega = 1.0 / 10000.0 ** (2.0 * k / time_dim)
    ang = t[..., None] * omega
    out = np.empty(t.shape + (time_dim,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def _gelu_tanh(x):
    return np.tanh(GELU_C * x * (1.0 + 0.044715 * x * x))


def gelu(x, th=None):
    """0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    th = _gelu_tanh(x) if th is None else th
    return 0.5 * x * (1.0 + th)


def gelu_grad(x, th=None):
    th = _gelu_tanh(x) if th is None else th
    inner = x * x
    inner *= 3 * 0.044715
    inner += 1.0
    inner *= GELU_C
    out = th * th
    np.subtract(1.0, out, out=out)
    out *= x
    out *= inner
    out += 1.0 + th
    out *= 0.5
    return out


def _split_in_w(params: DenoiserParams) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    w = params.weights["in_w"]
    for name, n in params.config.input_blocks:
        out[name] = w[pos:pos + n]
        pos += n
    return out


def _conv(h, taps, bias):
    K = taps.shape[0]
    p = K // 2
    N = h.shape[1]
    hp = np.pad(h, ((0, 0), (p, p), (0, 0)))
    out = np.broadcast_to(bias, h.shape).copy()
    for k in range(K):
        out += taps[k] * hp[:, k:k + N]
    return out


@dataclass
class ForwardCache:
    params_id: int
    params_version: int
    tensors: dict


def forward_batch(params: DenoiserParams, x_t, t, seed, frame, clip, mask, record: bool = False):
    """Batched forward pass. Returns x0_hat, or (x0_hat, cache) when `record`."""
    cfg = params.config
    W = params.weights
    x_t = np.asarray(x_t, dtype=np.float64)
    B, N, D = x_t.shape
    seed = np.asarray(seed, dtype=np.float64)
    frame = np.asarray(frame, dtype=np.float64)
    clip = np.asarray(clip, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool).reshape(B)
    if D != cfg.motion_dim or seed.shape != (B, cfg.seed_len, D):
        raise ValueError(f"x_t {x_t.shape} / seed {seed.shape} do not match the config")
    if frame.shape != (B, N, 2 * cfg.audio_dim) or clip.shape != (B, cfg.clip_dim):
        raise ValueError(f"condition shapes frame {frame.shape} clip {clip.shape} do not match the config")

    frame_eff = np.where(mask[:, None, None], 0.0, frame)
    clip_eff = np.where(mask[:, None], W["null_clip"], clip)
    temb = time_embedding(np.asarray(t).reshape(B), None, cfg.time_dim)
    seed_flat = seed.reshape(B, -1)
    seed_sum = seed_flat @ W["seed_w"] + W["seed_b"]

    win = _split_in_w(params)
    g = clip_eff @ win["clip"] + temb @ win["time"] + seed_sum @ win["seed"] + W["in_b"]
    h = x_t @ win["x"] + frame_eff @ win["frame"] + g[:, None, :]

    block_in, pre, tanhs, acts = [], [], [], []
    for i in range(cfg.depth):
        a = h @ W[f"block{i}_w1"] + W[f"block{i}_b1"]
        th = _gelu_tanh(a)
        z = gelu(a, th)
        if record:
            block_in.append(h)
            pre.append(a)
            tanhs.append(th)
            acts.append(z)
        h = h + z @ W[f"block{i}_w2"] + W[f"block{i}_b2"]
    c = _conv(h, W["conv_w"], W["conv_b"])
    out = c @ W["out_w"] + W["out_b"]
    if not record:
        return out
    cache = ForwardCache(id(params), params.version, dict(
        x_t=x_t, frame_eff=frame_eff, clip_eff=clip_eff, temb=temb, seed_flat=seed_flat,
        seed_sum=seed_sum, mask=mask, block_in=block_in, pre=pre, tanh=tanhs, act=acts, h_last=h, c=c))
    return out, cache


def backward(params: DenoiserParams, cache: Optional[ForwardCache], grad_out: np.ndarray) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss w.r.t. every parameter, given dLoss/dx0_hat."""
    if cache is None or not isinstance(cache, ForwardCache):
        raise RuntimeError("backward called without a recorded forward pass")
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise RuntimeError("forward cache does not belong to these parameters")
    cfg = params.config
    W = params.weights
    s = cache.tensors
    dout = np.asarray(grad_out, dtype=np.float64)
    if dout.shape != s["x_t"].shape:
        raise ValueError("gradient shape differs from the recorded output shape")
    B, N, _ = dout.shape
    H = cfg.hidden
    grads: dict[str, np.ndarray] = {}

    c2 = s["c"].reshape(-1, H)
    d2 = dout.reshape(-1, cfg.motion_dim)
    grads["out_w"] = c2.T @ d2
    grads["out_b"] = d2.sum(axis=0)
    dc = dout @ W["out_w"].T

    K = cfg.kernel
    p = K // 2
    h = s["h_last"]
    hp = np.pad(h, ((0, 0), (p, p), (0, 0)))
    grads["conv_b"] = dc.sum(axis=(0, 1))
    dtaps = np.empty((K, H))
    dhp = np.zeros_like(hp)
    for k in range(K):
        dtaps[k] = (dc * hp[:, k:k + N]).sum(axis=(0, 1))
        dhp[:, k:k + N] += W["conv_w"][k] * dc
    grads["conv_w"] = dtaps
    dh = dhp[:, p:p + N]

    for i in reversed(range(cfg.depth)):
        a = s["pre"][i]
        z = s["act"][i]
        dh2 = dh.reshape(-1, H)
        grads[f"block{i}_w2"] = z.reshape(-1, H).T @ dh2
        grads[f"block{i}_b2"] = dh2.sum(axis=0)
        da = (dh @ W[f"block{i}_w2"].T) * gelu_grad(a, s["tanh"][i])
        da2 = da.reshape(-1, H)
        grads[f"block{i}_w1"] = s["block_in"][i].reshape(-1, H).T @ da2
        grads[f"block{i}_b1"] = da2.sum(axis=0)
        dh = dh + da @ W[f"block{i}_w1"].T

    win = _split_in_w(params)
    dh2 = dh.reshape(-1, H)
    dg = dh.sum(axis=1)
    blocks = {
        "x": s["x_t"].reshape(-1, cfg.motion_dim).T @ dh2,
        "frame": s["frame_eff"].reshape(-1, 2 * cfg.audio_dim).T @ dh2,
        "clip": s["clip_eff"].T @ dg,
        "time": s["temb"].T @ dg,
        "seed": s["seed_sum"].T @ dg,
    }
    grads["in_w"] = np.concatenate([blocks[name] for name, _ in cfg.input_blocks], axis=0)
    grads["in_b"] = dg.sum(axis=0)
    dseed = dg @ win["seed"].T
    grads["seed_w"] = s["seed_flat"].T @ dseed
    grads["seed_b"] = dseed.sum(axis=0)
    dclip = dg @ win["clip"].T
    grads["null_clip"] = dclip[s["mask"]].sum(axis=0)
    return grads


def optimizer_step(params: DenoiserParams, grads: dict[str, np.ndarray], lr: float = 3e-5, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01) -> DenoiserParams:
    """AdamW with decoupled weight decay, updating `params` in place."""
    for k, w in params.weights.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient for {k} has shape {g.shape}, expected {w.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {k}")
    params.step += 1
    t = params.step
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for k, w in params.weights.items():
        g = grads[k]
        if weight_decay and is_decayed(k):
            w *= 1.0 - lr * weight_decay
        m = params.m[k]
        v = params.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    params.version += 1
    return params


class DenoiserModel:
    """Unbatched callable view of a parameter set: (x_t, t, seed, cond, cond_mask) -> x0_hat."""

    def __init__(self, params: DenoiserParams):
        self.params = params

    def __call__(self, x_t, t, seed, cond: ConditionVector, cond_mask: bool) -> np.ndarray:
        n = x_t.shape[0]
        frame = cond.frame_part[-n:]
        out = forward_batch(self.params, x_t[None], np.array([t]), seed[None], frame[None],
                            cond.clip_part[None], np.array([cond_mask]))
        return out[0]
