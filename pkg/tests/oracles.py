"""Independent reference computations shared by unit and acceptance tests."""
import math

import numpy as np

from dyadgest.denoiser import DenoiserConfig, backward, forward_batch, init_params, is_decayed
from dyadgest.diffusion import huber_grad, huber_loss

TINY = DenoiserConfig(motion_dim=3, audio_dim=2, context_dim=4, seed_len=2, hidden=8, depth=1,
                      time_dim=4, seed_summary_dim=3, kernel=3)


def random_params(cfg, seed):
    """Glorot-initialised params with the zero-initialised tensors filled in, so no gradient is trivially 0."""
    params = init_params(cfg, seed)
    rng = np.random.default_rng(seed + 10_000)
    for k in params.weights:
        if k == "out_w" or not is_decayed(k):
            params.weights[k] = rng.normal(scale=0.1, size=params.weights[k].shape)
    return params


def random_batch(cfg, seed, B=2, N=5, mask=None):
    rng = np.random.default_rng(seed)
    return dict(
        x_t=rng.normal(size=(B, N, cfg.motion_dim)),
        t=rng.integers(1, 1001, size=B),
        seed=rng.normal(size=(B, cfg.seed_len, cfg.motion_dim)),
        frame=rng.normal(size=(B, N, 2 * cfg.audio_dim)),
        clip=rng.normal(size=(B, cfg.clip_dim)),
        mask=np.array([False, True][:B] if mask is None else mask),
        target=rng.normal(size=(B, N, cfg.motion_dim)),
    )


def _loss(params, b):
    out = forward_batch(params, b["x_t"], b["t"], b["seed"], b["frame"], b["clip"], b["mask"])
    return huber_loss(out, b["target"], reduction="sum")


def analytic_grads(params, b):
    out, cache = forward_batch(params, b["x_t"], b["t"], b["seed"], b["frame"], b["clip"], b["mask"], record=True)
    return backward(params, cache, huber_grad(out, b["target"], reduction="sum"))


def fd_relative_errors(params, b, h=1e-5, floor=1e-8, groupwise=True):
    """Relative error per parameter tensor between central differences and backprop.

    groupwise: max |a - n| over the tensor divided by max(|a|, |n|) over the tensor.
    Otherwise the elementwise ratio, whose worst entries sit at gradients near the
    float64 roundoff of the difference quotient.
    """
    grads = analytic_grads(params, b)
    errors = {}
    for name, w in params.weights.items():
        num = np.zeros_like(w)
        for i in np.ndindex(w.shape):
            keep = w[i]
            w[i] = keep + h
            lp = _loss(params, b)
            w[i] = keep - h
            lm = _loss(params, b)
            w[i] = keep
            num[i] = (lp - lm) / (2 * h)
        a = grads[name]
        if groupwise:
            errors[name] = float(np.max(np.abs(a - num)) / max(np.max(np.abs(a)), np.max(np.abs(num)), floor))
        else:
            errors[name] = float(np.max(np.abs(a - num) / np.maximum(np.maximum(np.abs(a), np.abs(num)), floor)))
    return errors


def adamw_scalar_trace(w0, grads, lr, beta1, beta2, eps, wd, decayed=True):
    """Plain-float AdamW recurrence written out step by step."""
    w, m, v = float(w0), 0.0, 0.0
    trace = []
    for k, g in enumerate(grads, start=1):
        if decayed:
            w = w - lr * wd * w
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** k)
        vhat = v / (1 - beta2 ** k)
        w = w - lr * mhat / (math.sqrt(vhat) + eps)
        trace.append(w)
    return trace


def expected_huber_standard_normal(delta=1.0):
    """E[huber(Z)] for Z ~ N(0, 1), by quadrature."""
    from scipy import integrate, stats
    f = lambda z: (0.5 * z * z if abs(z) <= delta else delta * (abs(z) - 0.5 * delta)) * stats.norm.pdf(z)
    return sum(integrate.quad(f, a, b)[0] for a, b in [(-np.inf, -delta), (-delta, delta), (delta, np.inf)])
