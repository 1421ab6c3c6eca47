"""Trainable projection onto the conditioning width, and the bundles it yields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Module, Tensor, ops, parameter
from ..errors import ContractError, DimensionError
from ..text.transformer import TextEncoder
from ..text.vocab import Vocabulary, tokenize
from .strategies import ExtractionStrategy, extract, pool


class Projection(Module):
    """Bias-free linear map D_in -> d_c."""

    def __init__(self, d_in: int, d_c: int, rng: np.random.Generator | None = None, weight=None):
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_in, d_c))
        weight = np.asarray(weight, dtype=np.float32)
        if weight.shape != (d_in, d_c):
            raise DimensionError(f"projection weight must be {(d_in, d_c)}, got {weight.shape}")
        self.weight = parameter(weight)

    @property
    def d_in(self) -> int:
        return self.weight.shape[0]

    @property
    def d_c(self) -> int:
        return self.weight.shape[1]


def project(x, params: Projection) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[-1] != params.d_in:
        raise DimensionError(f"projection expects trailing dim {params.d_in}, got {x.shape}")
    return ops.matmul(x, params.weight)


@dataclass
class ConditioningBundle:
    tokens: Tensor                # (..., T, d_c)
    mask: np.ndarray              # (..., T)
    pooled: Tensor | None = None  # (..., d_c)
    is_null: bool = False
    strategy: str = ""


def condition(features, mask, strategy: ExtractionStrategy, params: Projection, is_null: bool = False):
    """Project pre-projection features; pooled = pool of the projected tokens."""
    mask = np.asarray(mask, dtype=bool)
    tokens = project(features, params)
    pooled = None
    if strategy.pooled:
        pooled = _pool_tensor(tokens, mask, strategy.pooled)
    return ConditioningBundle(tokens, mask, pooled, is_null, strategy.tag)


def _pool_tensor(tokens: Tensor, mask: np.ndarray, kind: str) -> Tensor:
    # pooling is linear in the tokens, so express it as a weighted sum that autodiff can follow
    t = mask.shape[-1]
    eye = np.eye(t, dtype=np.float32)
    weights = pool(np.broadcast_to(eye, mask.shape + (t,)), mask, kind)  # (..., T)
    w = Tensor(weights[..., None, :])
    return ops.reshape(ops.matmul(w, tokens), tokens.shape[:-2] + (tokens.shape[-1],))


def encode_captions(captions, encoder: TextEncoder, vocab: Vocabulary, strategy: ExtractionStrategy,
                    batch_size: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Frozen-encoder features (N, T, D) and masks (N, T), pre-projection."""
    cfg = encoder.config
    strategy.validate_depth(cfg.depth)
    seqs = [tokenize(c, vocab, cfg.context) for c in captions]
    feats = np.zeros((len(seqs), cfg.context, cfg.width), np.float32)
    masks = np.zeros((len(seqs), cfg.context), bool)
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        ids = np.stack([s.ids for s in chunk])
        m = np.stack([s.mask for s in chunk])
        feats[start:start + len(chunk)] = extract(encoder.collect_batch(ids, m), strategy)
        masks[start:start + len(chunk)] = m
    return feats, masks


class NullCondition:
    """Caches the extracted empty caption for one encoder and strategy."""

    def __init__(self, encoder: TextEncoder, vocab: Vocabulary, strategy: ExtractionStrategy):
        feats, masks = encode_captions([""], encoder, vocab, strategy)
        self.features = feats[0]
        self.mask = masks[0]
        self.strategy = strategy
        self.encoder = encoder

    def bundle(self, params: Projection) -> ConditioningBundle:
        return condition(self.features, self.mask, self.strategy, params, is_null=True)


_NULL_CACHE: dict[tuple[int, str], NullCondition] = {}


def make_null_condition(context: int, strategy: ExtractionStrategy, params: Projection, encoder: TextEncoder,
                        vocab: Vocabulary) -> ConditioningBundle:
    if encoder.config.context != context:
        raise ContractError(f"encoder context {encoder.config.context} != requested {context}")
    key = (id(encoder), strategy.tag)
    cached = _NULL_CACHE.get(key)
    if cached is None or cached.encoder is not encoder or cached.strategy != strategy:
        cached = _NULL_CACHE[key] = NullCondition(encoder, vocab, strategy)
    return cached.bundle(params)
