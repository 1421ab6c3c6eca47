"""Next-token and masked-token training loops for the text encoders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import AdamW, Tape, ops
from ..errors import ContractError, DataError
from .transformer import CAUSAL, BIDIRECTIONAL, EncoderConfig, TextEncoder
from .vocab import Vocabulary, tokenize_batch

DEFAULT_MASK_RATE = 0.15


@dataclass(frozen=True)
class EncoderSchedule:
    steps: int = 2000
    batch_size: int = 32
    lr: float = 3e-3
    weight_decay: float = 0.01


@dataclass
class TrainResult:
    model: TextEncoder
    losses: list[float] = field(default_factory=list)


def _prepare(corpus, vocab: Vocabulary, config: EncoderConfig):
    captions = list(corpus)
    if not captions:
        raise DataError("training corpus is empty")
    if len(vocab) != config.vocab_size:
        raise ContractError(f"vocabulary has {len(vocab)} tokens, config expects {config.vocab_size}")
    return tokenize_batch(captions, vocab, config.context)


def _batch(rng, n, size):
    return rng.integers(0, n, size=size)


def train_causal_lm(corpus, config: EncoderConfig, schedule: EncoderSchedule, vocab: Vocabulary,
                    seed: int = 0) -> TrainResult:
    if config.kind != CAUSAL:
        raise ContractError("train_causal_lm needs a causal encoder config")
    ids, mask = _prepare(corpus, vocab, config)
    rng = np.random.default_rng(seed)
    model = TextEncoder(config, rng)
    opt = AdamW(model.parameters(), lr=schedule.lr, weight_decay=schedule.weight_decay)
    result = TrainResult(model)
    for _ in range(schedule.steps):
        rows = _batch(rng, len(ids), schedule.batch_size)
        x, m = ids[rows], mask[rows]
        # predict token t+1 from positions <= t; pads after EOS carry no loss
        targets = np.roll(x, -1, axis=1)
        weights = np.roll(m, -1, axis=1).astype(np.float32)
        weights[:, -1] = 0.0
        with Tape() as tape:
            loss = ops.cross_entropy(model.logits(model.hidden_states(x, m)), targets, weights)
        tape.backward(loss, wrt=opt.params)
        opt.step()
        result.losses.append(float(loss.data))
    return result


def draw_masks(rng: np.random.Generator, mask: np.ndarray, mask_rate: float) -> np.ndarray:
    """Independent Bernoulli selection over real tokens after BOS."""
    if not 0.0 < mask_rate < 1.0:
        raise ContractError(f"mask rate must lie strictly between 0 and 1, got {mask_rate}")
    eligible = np.asarray(mask, dtype=bool).copy()
    eligible[..., 0] = False
    return eligible & (rng.random(eligible.shape) < mask_rate)


def masked_lm_loss(model: TextEncoder, ids: np.ndarray, mask: np.ndarray, chosen: np.ndarray, mask_id: int):
    corrupted = np.where(chosen, mask_id, ids)
    logits = model.logits(model.hidden_states(corrupted, mask))
    return ops.cross_entropy(logits, ids, chosen.astype(np.float32))


def train_masked_lm(corpus, config: EncoderConfig, schedule: EncoderSchedule, vocab: Vocabulary,
                    mask_rate: float = DEFAULT_MASK_RATE, seed: int = 0) -> TrainResult:
    if config.kind != BIDIRECTIONAL:
        raise ContractError("train_masked_lm needs a bidirectional encoder config")
    if not 0.0 < mask_rate < 1.0:
        raise ContractError(f"mask rate must lie strictly between 0 and 1, got {mask_rate}")
    ids, mask = _prepare(corpus, vocab, config)
    rng = np.random.default_rng(seed)
    model = TextEncoder(config, rng)
    opt = AdamW(model.parameters(), lr=schedule.lr, weight_decay=schedule.weight_decay)
    result = TrainResult(model)
    for _ in range(schedule.steps):
        rows = _batch(rng, len(ids), schedule.batch_size)
        x, m = ids[rows], mask[rows]
        chosen = draw_masks(rng, m, mask_rate)
        with Tape() as tape:
            loss = masked_lm_loss(model, x, m, chosen, vocab.mask_id)
        tape.backward(loss, wrt=opt.params)
        opt.step()
        result.losses.append(float(loss.data))
    return result
