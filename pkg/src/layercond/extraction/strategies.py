"""Per-token conditioning from a stack of hidden states.

Four per-token variants are supported::

    last        stack[L]
    single(k)   stack[k]
    mean        mean_l stack[l]
    normmean    mean_l layer_norm(stack[l])   (non-affine, per token)

plus an optional pooled summary vector (mean over valid tokens, or the
last valid token).  Everything works on the trailing three axes, so a
batch of stacks shaped (B, L+1, T, D) is handled the same as one stack.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff.ops import LN_EPS
from ..errors import ConfigurationError, ContractError, StrategyIndexError

LAST, SINGLE, MEAN, NORMMEAN = "last", "single", "mean", "normmean"
VARIANTS = (LAST, SINGLE, MEAN, NORMMEAN)
MEAN_POOL, LAST_TOKEN_POOL = "meanpool", "lastpool"
POOL_KINDS = (MEAN_POOL, LAST_TOKEN_POOL)


@dataclass(frozen=True)
class ExtractionStrategy:
    variant: str = LAST
    layer: int | None = None
    pooled: str | None = None
    center_only: bool = False  # normmean ablation: subtract the mean, skip the variance scaling

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown extraction variant {self.variant!r}")
        if (self.variant == SINGLE) != (self.layer is not None):
            raise ConfigurationError("a layer index is required for, and only for, the single variant")
        if self.pooled is not None and self.pooled not in POOL_KINDS:
            raise ConfigurationError(f"unknown pooling kind {self.pooled!r}")
        if self.center_only and self.variant != NORMMEAN:
            raise ConfigurationError("center_only applies to the normmean variant only")

    @property
    def tag(self) -> str:
        base = f"{SINGLE}:{self.layer}" if self.variant == SINGLE else self.variant
        if self.center_only:
            base += "-center"
        return base + (f"+{self.pooled}" if self.pooled else "")

    @classmethod
    def parse(cls, tag: str) -> "ExtractionStrategy":
        base, _, pooled = tag.partition("+")
        center = base.endswith("-center")
        base = base.removesuffix("-center")
        layer = None
        if base.startswith(SINGLE + ":"):
            base, layer_txt = base.split(":", 1)
            try:
                layer = int(layer_txt)
            except ValueError:
                raise ConfigurationError(f"bad layer index in strategy tag {tag!r}") from None
        return cls(base, layer, pooled or None, center)

    def validate_depth(self, depth: int) -> None:
        if self.variant == SINGLE and not 0 <= self.layer <= depth:
            raise StrategyIndexError(f"layer {self.layer} outside 0..{depth}")


def normalize_tokens(x: np.ndarray, eps: float = LN_EPS, center_only: bool = False) -> np.ndarray:
    xd = np.asarray(x)
    xc = xd - xd.mean(axis=-1, keepdims=True)
    xc -= xc.mean(axis=-1, keepdims=True)
    if center_only:
        return xc
    return xc / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)


def extract(stack, strategy: ExtractionStrategy) -> np.ndarray:
    """Per-token matrix (..., T, D) from states shaped (..., L+1, T, D)."""
    states = getattr(stack, "states", stack)
    states = np.asarray(states)
    if states.ndim < 3:
        raise ContractError(f"layer stack needs at least 3 axes, got shape {states.shape}")
    depth = states.shape[-3] - 1
    strategy.validate_depth(depth)
    if strategy.variant == LAST:
        return states[..., depth, :, :].copy()
    if strategy.variant == SINGLE:
        return states[..., strategy.layer, :, :].copy()
    if strategy.variant == MEAN:
        return states.mean(axis=-3)
    return normalize_tokens(states, center_only=strategy.center_only).mean(axis=-3)


def pool(token_embs: np.ndarray, mask: np.ndarray, kind: str) -> np.ndarray:
    x = np.asarray(token_embs)
    m = np.asarray(mask, dtype=bool)
    if m.shape != x.shape[:-1]:
        raise ContractError(f"mask shape {m.shape} does not match tokens {x.shape}")
    counts = m.sum(axis=-1)
    if np.any(counts == 0):
        raise ContractError("cannot pool a sequence with no valid tokens")
    if kind == MEAN_POOL:
        w = m.astype(x.dtype)
        return (x * w[..., None]).sum(axis=-2) / counts[..., None].astype(x.dtype)
    if kind == LAST_TOKEN_POOL:
        # right padding only, so the last valid position is count - 1
        last = (counts - 1)[..., None, None]
        return np.take_along_axis(x, np.broadcast_to(last, x.shape[:-2] + (1, x.shape[-1])), axis=-2)[..., 0, :]
    raise ConfigurationError(f"unknown pooling kind {kind!r}")
