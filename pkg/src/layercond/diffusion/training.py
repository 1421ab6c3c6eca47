"""One optimisation step of epsilon-prediction training with caption drop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import AdamW, Tape, Tensor, ops
from ..errors import ConfigurationError
from .schedule import NoiseSchedule, q_sample

DEFAULT_DROP_PROB = 0.1


@dataclass
class DropCounter:
    samples: int = 0
    dropped: int = 0

    @property
    def fraction(self) -> float:
        return self.dropped / self.samples if self.samples else 0.0


@dataclass
class TrainStreams:
    """Separate generators for each source of training randomness."""

    drop: np.random.Generator
    timesteps: np.random.Generator
    noise: np.random.Generator

    @classmethod
    def single(cls, rng: np.random.Generator) -> "TrainStreams":
        return cls(rng, rng, rng)


def validate_drop_prob(p: float) -> float:
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"drop_prob must lie in [0, 1], got {p}")
    return float(p)


def draw_drops(rng: np.random.Generator, n: int, drop_prob: float) -> np.ndarray:
    return rng.random(n) < validate_drop_prob(drop_prob)


def train_step(model, images: np.ndarray, features: np.ndarray, masks: np.ndarray, null, schedule: NoiseSchedule,
               drop_prob: float, rng, optimizer: AdamW | None = None, counter: DropCounter | None = None,
               strategy_tag: str | None = None, noise: np.ndarray | None = None) -> float:
    """Returns the batch loss; updates parameters when an optimizer is given.

    ``null`` carries the extracted empty caption (``features``, ``mask``).
    ``noise`` overrides the drawn epsilon (used to check the loss floor).
    """
    validate_drop_prob(drop_prob)
    if strategy_tag is not None and strategy_tag != model.strategy.tag:
        raise ConfigurationError(f"batch strategy {strategy_tag!r} != model strategy {model.strategy.tag!r}")
    streams = rng if isinstance(rng, TrainStreams) else TrainStreams.single(rng)
    images = np.asarray(images, dtype=np.float32)
    b = images.shape[0]
    drop = draw_drops(streams.drop, b, drop_prob)
    feats = np.where(drop[:, None, None], null.features[None], features).astype(np.float32)
    mask = np.where(drop[:, None], null.mask[None], masks)
    if counter is not None:
        counter.samples += b
        counter.dropped += int(drop.sum())
    t = streams.timesteps.integers(0, schedule.steps, size=b)
    eps = streams.noise.standard_normal(images.shape).astype(np.float32) if noise is None else noise
    x_t = q_sample(images, t, eps, schedule)
    with Tape() as tape:
        bundle = model.bundle(feats, mask)
        pred = model.predict_eps(Tensor(x_t), t, bundle)
        loss = ops.mse_loss(pred, eps)
    if optimizer is not None:
        tape.backward(loss, wrt=optimizer.params)
        optimizer.step()
    return float(loss.data)
