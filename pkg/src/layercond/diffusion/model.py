"""U-Net plus the trainable conditioning projection, bound to one extraction strategy."""

from __future__ import annotations

import numpy as np

from ..autodiff import Module, Tensor
from ..errors import ConfigurationError
from ..extraction import ConditioningBundle, ExtractionStrategy, Projection, condition
from .unet import UNet, UNetConfig


class DiffusionModel(Module):
    def __init__(self, unet_config: UNetConfig, d_in: int, strategy: ExtractionStrategy, rng: np.random.Generator):
        if unet_config.pooled != (strategy.pooled is not None):
            raise ConfigurationError(f"U-Net pooled flag {unet_config.pooled} disagrees with strategy {strategy.tag}")
        self.strategy = strategy
        self.projection = Projection(d_in, unet_config.cond_dim, rng)
        self.unet = UNet(unet_config, rng)

    @property
    def config(self) -> UNetConfig:
        return self.unet.config

    def bundle(self, features, mask, is_null: bool = False) -> ConditioningBundle:
        return condition(features, mask, self.strategy, self.projection, is_null=is_null)

    def check_bundle(self, bundle: ConditioningBundle) -> None:
        if bundle.strategy != self.strategy.tag:
            raise ConfigurationError(f"bundle built with strategy {bundle.strategy!r}, model trained with "
                                     f"{self.strategy.tag!r}")

    def predict_eps(self, x_t, t, bundle: ConditioningBundle, capture: list | None = None) -> Tensor:
        self.check_bundle(bundle)
        x = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
        return self.unet(x, t, bundle.tokens, bundle.mask, pooled=bundle.pooled, capture=capture)
