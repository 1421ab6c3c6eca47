"""Linear-beta DDPM noise schedule and the closed-form forward process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError

DEFAULT_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bar: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.betas)


def build_schedule(steps: int = DEFAULT_STEPS, beta_start: float = DEFAULT_BETA_START,
                   beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    if steps < 1:
        raise ContractError(f"schedule needs at least one step, got {steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ContractError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, steps, dtype=np.float64)
    alphas = 1.0 - betas
    return NoiseSchedule(betas, alphas, np.cumprod(alphas))


def q_sample(x0: np.ndarray, t, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, one t per leading index (or a scalar)."""
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if eps.shape != x0.shape:
        raise ContractError(f"noise shape {eps.shape} != image shape {x0.shape}")
    t = np.asarray(t)
    if t.size and (t.min() < 0 or t.max() >= schedule.steps):
        raise IndexError(f"timestep outside 0..{schedule.steps - 1}")
    abar = schedule.alpha_bar[t]
    if abar.ndim:
        abar = abar.reshape(abar.shape + (1,) * (x0.ndim - abar.ndim))
    out = np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
    return out.astype(x0.dtype if x0.dtype.kind == "f" else np.float32, copy=False)


def respaced(schedule: NoiseSchedule, steps: int | None) -> np.ndarray:
    """Descending subsequence of timesteps used by strided sampling."""
    total = schedule.steps
    if steps is None or steps >= total:
        return np.arange(total - 1, -1, -1)
    if steps < 1:
        raise ContractError(f"need at least one sampling step, got {steps}")
    ts = np.unique(np.round(np.linspace(0, total - 1, steps)).astype(np.int64))
    return ts[::-1]
