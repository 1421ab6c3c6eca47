"""Cross-attention heatmap capture."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class AttentionRecord:
    timestep: int
    resolution: int
    probs: np.ndarray  # (B, r*r, T) head-averaged


def capture_attention(model, x_t, t, cond, token_index: int):
    """Records for every attention site plus per-site maps for one token at image size."""
    mask = np.asarray(cond.mask, dtype=bool)
    if not 0 <= token_index < mask.shape[-1] or not mask[..., token_index].all():
        raise ContractError(f"token index {token_index} is masked or out of range")
    captured: list[np.ndarray] = []
    b = mask.shape[0]
    tb = np.broadcast_to(np.asarray(t), (b,))
    model.predict_eps(x_t, tb, cond, capture=captured)
    size = model.config.image_size
    records, maps = [], []
    for probs in captured:
        r = probs.shape[1]
        records.append(AttentionRecord(int(np.asarray(t).flat[0]), r, probs.reshape(b, r * r, -1)))
        m = probs[..., token_index]
        f = size // r
        up = np.repeat(np.repeat(m, f, axis=1), f, axis=2)
        lo = up.min(axis=(1, 2), keepdims=True)
        span = up.max(axis=(1, 2), keepdims=True) - lo
        maps.append(np.where(span > 0, (up - lo) / np.where(span > 0, span, 1.0), 0.0))
    return records, np.stack(maps)
