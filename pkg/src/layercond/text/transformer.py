"""Pre-norm transformer encoders that expose every layer's hidden states."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import Module, Tensor, ops, parameter
from ..errors import ConfigurationError, ContractError
from .vocab import TokenSequence

CAUSAL = "causal"
BIDIRECTIONAL = "bidirectional"
_NEG = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = CAUSAL
    depth: int = 4
    width: int = 64
    heads: int = 4
    ff_mult: int = 4
    context: int = 32
    vocab_size: int = 64

    def __post_init__(self):
        if self.kind not in (CAUSAL, BIDIRECTIONAL):
            raise ConfigurationError(f"unknown encoder kind {self.kind!r}")
        if self.depth < 1:
            raise ConfigurationError("encoder depth must be >= 1")
        if self.width % self.heads:
            raise ConfigurationError(f"width {self.width} not divisible by {self.heads} heads")
        if self.context < 2 or self.vocab_size < 1:
            raise ConfigurationError("context must be >= 2 and vocabulary nonempty")

    def digest(self) -> str:
        text = ";".join(f"{k}={v}" for k, v in sorted(asdict(self).items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def default_config(kind: str, vocab_size: int, small: bool = False) -> EncoderConfig:
    if small:
        return EncoderConfig(kind=kind, depth=2, width=32, heads=4, vocab_size=vocab_size)
    return EncoderConfig(kind=kind, depth=4, width=64, heads=4, vocab_size=vocab_size)


@dataclass(frozen=True)
class LayerStack:
    states: np.ndarray  # (L+1, T, D); index 0 is the embedding output
    mask: np.ndarray    # (T,)

    @property
    def depth(self) -> int:
        return self.states.shape[0] - 1


def _init(rng, *shape, std=0.02):
    return rng.normal(0.0, std, size=shape).astype(np.float32)


class LayerNorm(Module):
    def __init__(self, d):
        self.weight = parameter(np.ones(d))
        self.bias = parameter(np.zeros(d))

    def __call__(self, x):
        return ops.layer_norm(x, weight=self.weight, bias=self.bias)


class Block(Module):
    def __init__(self, rng, cfg: EncoderConfig):
        d, f = cfg.width, cfg.width * cfg.ff_mult
        resid_std = 0.02 / math.sqrt(2 * cfg.depth)
        self.ln1 = LayerNorm(d)
        self.qkv = parameter(_init(rng, d, 3 * d))
        self.qkv_b = parameter(np.zeros(3 * d))
        self.proj = parameter(_init(rng, d, d, std=resid_std))
        self.proj_b = parameter(np.zeros(d))
        self.ln2 = LayerNorm(d)
        self.ff1 = parameter(_init(rng, d, f))
        self.ff1_b = parameter(np.zeros(f))
        self.ff2 = parameter(_init(rng, f, d, std=resid_std))
        self.ff2_b = parameter(np.zeros(d))
        self.heads = cfg.heads

    def __call__(self, x: Tensor, bias: np.ndarray) -> Tensor:
        b, t, d = x.shape
        nh, dh = self.heads, d // self.heads
        qkv = ops.linear(self.ln1(x), self.qkv, self.qkv_b)
        qkv = ops.transpose(ops.reshape(qkv, (b, t, 3, nh, dh)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh)) + Tensor(bias)
        att = ops.matmul(ops.softmax(scores, axis=-1), v)
        att = ops.reshape(ops.transpose(att, (0, 2, 1, 3)), (b, t, d))
        x = x + ops.linear(att, self.proj, self.proj_b)
        h = ops.silu(ops.linear(self.ln2(x), self.ff1, self.ff1_b))
        return x + ops.linear(h, self.ff2, self.ff2_b)


class TextEncoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        d = config.width
        self.tok_emb = parameter(_init(rng, config.vocab_size, d))
        self.pos_emb = parameter(_init(rng, config.context, d))
        self.blocks = [Block(rng, config) for _ in range(config.depth)]
        self.ln_f = LayerNorm(d)
        self.head = parameter(_init(rng, d, config.vocab_size))

    @property
    def kind(self) -> str:
        return self.config.kind

    def _attention_bias(self, mask: np.ndarray) -> np.ndarray:
        b, t = mask.shape
        if self.kind == CAUSAL:
            allowed = np.tril(np.ones((t, t), dtype=bool))[None].repeat(b, axis=0)
        else:
            # every position sees all real tokens; pads are never keys
            allowed = np.broadcast_to(mask[:, None, :], (b, t, t))
        return np.where(allowed, 0.0, _NEG).astype(np.float32)[:, None]

    def _check(self, ids: np.ndarray):
        cfg = self.config
        if ids.ndim != 2 or ids.shape[1] != cfg.context:
            raise ContractError(f"expected token batch of shape (B, {cfg.context}), got {ids.shape}")
        if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
            raise ContractError(f"token id outside vocabulary of size {cfg.vocab_size}")

    def hidden_states(self, ids: np.ndarray, mask: np.ndarray) -> list[Tensor]:
        ids = np.asarray(ids)
        mask = np.asarray(mask, dtype=bool)
        self._check(ids)
        bias = self._attention_bias(mask)
        h = ops.embedding(self.tok_emb, ids) + self.pos_emb
        states = [h]
        for block in self.blocks:
            h = block(h, bias)
            states.append(h)
        return states

    def logits(self, states: list[Tensor]) -> Tensor:
        return ops.matmul(self.ln_f(states[-1]), self.head)

    def collect_batch(self, ids: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """(B, L+1, T, D) stacks without recording a tape."""
        states = self.hidden_states(ids, mask)
        return np.stack([s.data for s in states], axis=1)


def forward_collect(seq: TokenSequence, model: TextEncoder) -> LayerStack:
    if len(seq) != model.config.context:
        raise ContractError(f"sequence length {len(seq)} != encoder context {model.config.context}")
    states = model.collect_batch(seq.ids[None], seq.mask[None])[0]
    return LayerStack(states, seq.mask.copy())
