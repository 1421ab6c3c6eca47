"""Cross-attention U-Net over channels-last 32x32 images."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Module, Tensor, ops, parameter
from ..errors import ConfigurationError, DimensionError


@dataclass(frozen=True)
class UNetConfig:
    image_size: int = 32
    in_channels: int = 3
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2, 4)
    attn_resolutions: tuple[int, ...] = (16, 8)
    num_heads: int = 4
    cond_dim: int = 64
    time_dim: int = 128
    groups: int = 8
    pooled: bool = False

    def __post_init__(self):
        levels = len(self.channel_mults)
        if self.image_size % (2 ** (levels - 1)):
            raise ConfigurationError(f"image size {self.image_size} not divisible by 2^{levels - 1}")
        for m in self.channel_mults:
            ch = self.base_channels * m
            if ch % self.groups or ch % self.num_heads:
                raise ConfigurationError(f"{ch} channels incompatible with {self.groups} groups / {self.num_heads} heads")

    @property
    def resolutions(self) -> list[int]:
        return [self.image_size // 2**i for i in range(len(self.channel_mults))]


def _he(rng, shape, fan_in, gain=1.0):
    return rng.normal(0.0, gain * math.sqrt(2.0 / fan_in), size=shape).astype(np.float32)


class GroupNorm(Module):
    def __init__(self, channels, groups):
        self.groups = groups
        self.weight = parameter(np.ones(channels))
        self.bias = parameter(np.zeros(channels))

    def __call__(self, x):
        return ops.group_norm(x, self.groups, self.weight, self.bias)


class Conv(Module):
    def __init__(self, rng, cin, cout, k=3, stride=1, zero=False):
        self.stride = stride
        w = np.zeros((k, k, cin, cout), np.float32) if zero else _he(rng, (k, k, cin, cout), k * k * cin)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(cout))

    def __call__(self, x):
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride)


class Linear(Module):
    def __init__(self, rng, din, dout, bias=True, zero=False, gain=1.0):
        w = np.zeros((din, dout), np.float32) if zero else _he(rng, (din, dout), din, gain)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(dout)) if bias else None

    def __call__(self, x):
        return ops.linear(x, self.weight, self.bias)


class ResBlock(Module):
    def __init__(self, rng, cin, cout, time_dim, groups):
        self.norm1 = GroupNorm(cin, groups)
        self.conv1 = Conv(rng, cin, cout)
        self.time_proj = Linear(rng, time_dim, cout)
        self.norm2 = GroupNorm(cout, groups)
        self.conv2 = Conv(rng, cout, cout, zero=True)
        self.skip = Conv(rng, cin, cout, k=1) if cin != cout else None

    def __call__(self, x, temb_act):
        h = self.conv1(ops.silu(self.norm1(x)))
        t = self.time_proj(temb_act)
        h = h + ops.reshape(t, (t.shape[0], 1, 1, t.shape[1]))
        h = self.conv2(ops.silu(self.norm2(h)))
        return (self.skip(x) if self.skip is not None else x) + h


class CrossAttention(Module):
    """Spatial positions attend to conditioning tokens; pads are masked out."""

    def __init__(self, rng, channels, cond_dim, heads, groups):
        self.heads = heads
        self.norm = GroupNorm(channels, groups)
        self.q = Linear(rng, channels, channels, bias=False, gain=0.5)
        self.k = Linear(rng, cond_dim, channels, bias=False, gain=0.5)
        self.v = Linear(rng, cond_dim, channels, bias=False, gain=0.5)
        self.out = Linear(rng, channels, channels, zero=True)

    def __call__(self, x, cond, mask_bias, capture=None):
        b, h, w, c = x.shape
        nh, dh = self.heads, c // self.heads
        t = cond.shape[1]
        hs = ops.reshape(self.norm(x), (b, h * w, c))
        q = ops.transpose(ops.reshape(self.q(hs), (b, h * w, nh, dh)), (0, 2, 1, 3))
        k = ops.transpose(ops.reshape(self.k(cond), (b, t, nh, dh)), (0, 2, 3, 1))
        v = ops.transpose(ops.reshape(self.v(cond), (b, t, nh, dh)), (0, 2, 1, 3))
        scores = ops.matmul(q, k) * (1.0 / math.sqrt(dh)) + mask_bias
        probs = ops.softmax(scores, axis=-1)
        if capture is not None:
            capture.append(probs.data.mean(axis=1).reshape(b, h, w, t))
        o = ops.reshape(ops.transpose(ops.matmul(probs, v), (0, 2, 1, 3)), (b, h * w, c))
        return x + ops.reshape(self.out(o), (b, h, w, c))


def timestep_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-math.log(max_period) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.cos(args), np.sin(args)], axis=1).astype(np.float32)


class UNet(Module):
    """One ResBlock per level on the way down, one per level on the way up.

    Cross-attention follows every ResBlock whose resolution is listed in
    ``attn_resolutions`` (and the middle block).
    """

    def __init__(self, config: UNetConfig, rng: np.random.Generator):
        self.config = config
        cfg = config
        base = cfg.base_channels
        chans = [base * m for m in cfg.channel_mults]
        res = cfg.resolutions
        self.freq_dim = base
        self.time1 = Linear(rng, self.freq_dim, cfg.time_dim)
        self.time2 = Linear(rng, cfg.time_dim, cfg.time_dim)
        self.pooled_map = Linear(rng, cfg.cond_dim, cfg.time_dim, zero=True) if cfg.pooled else None
        self.conv_in = Conv(rng, cfg.in_channels, base)

        self.down = []
        self.down_attn = []
        self.downsample = []
        prev = base
        for i, ch in enumerate(chans):
            self.down.append(ResBlock(rng, prev, ch, cfg.time_dim, cfg.groups))
            self.down_attn.append(
                CrossAttention(rng, ch, cfg.cond_dim, cfg.num_heads, cfg.groups) if res[i] in cfg.attn_resolutions else None
            )
            if i < len(chans) - 1:
                self.downsample.append(Conv(rng, ch, ch, stride=2))
            prev = ch

        self.mid = ResBlock(rng, prev, prev, cfg.time_dim, cfg.groups)
        self.mid_attn = CrossAttention(rng, prev, cfg.cond_dim, cfg.num_heads, cfg.groups)

        self.up = []
        self.up_attn = []
        for i in reversed(range(len(chans))):
            ch = chans[i]
            self.up.append(ResBlock(rng, prev + ch, ch, cfg.time_dim, cfg.groups))
            self.up_attn.append(
                CrossAttention(rng, ch, cfg.cond_dim, cfg.num_heads, cfg.groups) if res[i] in cfg.attn_resolutions else None
            )
            prev = ch

        self.norm_out = GroupNorm(base, cfg.groups)
        self.conv_out = Conv(rng, base, cfg.in_channels, zero=True)

    def time_embed(self, t: np.ndarray, pooled: Tensor | None) -> Tensor:
        emb = self.time2(ops.silu(self.time1(Tensor(timestep_embedding(t, self.freq_dim)))))
        if pooled is not None:
            emb = emb + self.inject_pooled(pooled)
        return emb

    def inject_pooled(self, pooled: Tensor) -> Tensor:
        if self.pooled_map is None:
            raise ConfigurationError("pooled vector supplied but pooled conditioning is disabled")
        return self.pooled_map(pooled)

    def __call__(self, x: Tensor, t: np.ndarray, cond: Tensor, mask: np.ndarray, pooled: Tensor | None = None,
                 capture: list | None = None) -> Tensor:
        cfg = self.config
        b = x.shape[0]
        if cond.shape[-1] != cfg.cond_dim:
            raise DimensionError(f"conditioning width {cond.shape[-1]} != cond_dim {cfg.cond_dim}")
        if pooled is not None and self.pooled_map is None:
            raise ConfigurationError("pooled vector supplied but pooled conditioning is disabled")
        t = np.broadcast_to(np.asarray(t), (b,))
        mask = np.asarray(mask, dtype=bool)
        bias = np.where(mask, 0.0, -1e9).astype(x.data.dtype).reshape(b, 1, 1, mask.shape[-1])
        mask_bias = Tensor(bias)
        temb = ops.silu(self.time_embed(t, pooled))

        h = self.conv_in(x)
        skips = []
        for i, block in enumerate(self.down):
            h = block(h, temb)
            if self.down_attn[i] is not None:
                h = self.down_attn[i](h, cond, mask_bias, capture)
            skips.append(h)
            if i < len(self.downsample):
                h = self.downsample[i](h)

        h = self.mid(h, temb)
        h = self.mid_attn(h, cond, mask_bias, capture)

        for j, block in enumerate(self.up):
            h = block(ops.concat([h, skips.pop()], axis=-1), temb)
            if self.up_attn[j] is not None:
                h = self.up_attn[j](h, cond, mask_bias, capture)
            if j < len(self.up) - 1:
                h = ops.upsample2x(h)

        return self.conv_out(ops.silu(self.norm_out(h)))

    def attention_sites(self) -> list[int]:
        """Spatial resolution of each cross-attention site in capture order."""
        res = self.config.resolutions
        sites = [res[i] for i, a in enumerate(self.down_attn) if a is not None]
        sites.append(res[-1])
        sites += [res[len(res) - 1 - j] for j, a in enumerate(self.up_attn) if a is not None]
        return sites
