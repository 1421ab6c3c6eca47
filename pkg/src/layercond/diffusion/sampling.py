"""Classifier-free guidance and ancestral / deterministic samplers."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import ConfigurationError
from .schedule import NoiseSchedule, respaced

DEFAULT_GUIDANCE = 7.0
ANCESTRAL, DDIM = "ancestral", "ddim"


def cfg_predict(x_t, t, cond, null_cond, w: float, model) -> np.ndarray:
    """eps_u + w (eps_c - eps_u) from two separate model evaluations; nothing is clipped."""
    eps_c = model.predict_eps(x_t, t, cond).data
    eps_u = model.predict_eps(x_t, t, null_cond).data
    # the endpoints return a branch as-is: eps_u + (eps_c - eps_u) can round, and 0 * diff can flip a -0.0
    if w == 1.0:
        return eps_c
    if w == 0.0:
        return eps_u
    return eps_u + np.float32(w) * (eps_c - eps_u)


def ddpm_sample(model, cond, null_cond, w: float, schedule: NoiseSchedule, rng: np.random.Generator,
                steps: int | None = None, sampler: str = ANCESTRAL,
                callback: Callable[[int, np.ndarray], None] | None = None) -> np.ndarray:
    """Sample a batch shaped like the conditioning batch; the result is not clipped."""
    if sampler not in (ANCESTRAL, DDIM):
        raise ConfigurationError(f"unknown sampler {sampler!r}")
    cfg = model.config
    b = cond.mask.shape[0]
    x = rng.standard_normal((b, cfg.image_size, cfg.image_size, cfg.in_channels)).astype(np.float32)
    ts = respaced(schedule, steps)
    abar = schedule.alpha_bar
    for i, t in enumerate(ts):
        if callback is not None:
            callback(int(t), x)
        tb = np.full(b, t, dtype=np.int64)
        eps = cfg_predict(x, tb, cond, null_cond, w, model)
        a_t = abar[t]
        a_prev = abar[ts[i + 1]] if i + 1 < len(ts) else 1.0
        if sampler == DDIM:
            x0 = (x - np.sqrt(1.0 - a_t) * eps) / np.sqrt(a_t)
            x = np.sqrt(a_prev) * x0 + np.sqrt(1.0 - a_prev) * eps
        else:
            # DDPM posterior for the (possibly strided) step t -> prev
            alpha = a_t / a_prev
            beta = 1.0 - alpha
            x = (x - beta / np.sqrt(1.0 - a_t) * eps) / np.sqrt(alpha)
            if i + 1 < len(ts):
                var = beta * (1.0 - a_prev) / (1.0 - a_t)
                x = x + np.sqrt(var) * rng.standard_normal(x.shape)
        x = x.astype(np.float32)
    return x


def to_uint8(images: np.ndarray) -> np.ndarray:
    """[-1, 1] floats to 8-bit, clipping only here for file output."""
    return np.round((np.clip(images, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


def from_uint8(images: np.ndarray) -> np.ndarray:
    return np.asarray(images, dtype=np.float32) / 127.5 - 1.0
