"""Run configuration: TOML text, schema validation and a stable digest."""

from __future__ import annotations

import hashlib
import sys
from dataclasses import asdict, dataclass, field, fields, replace

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from ..errors import ConfigurationError
from ..extraction import ExtractionStrategy
from ..text.transformer import BIDIRECTIONAL, CAUSAL


@dataclass(frozen=True)
class EncoderSection:
    kind: str = CAUSAL
    depth: int = 4
    width: int = 64
    heads: int = 4
    ff_mult: int = 4
    context: int = 32
    steps: int = 3000
    batch_size: int = 32
    lr: float = 3e-3
    weight_decay: float = 0.01
    mask_rate: float = 0.15
    seed: int = 0


@dataclass(frozen=True)
class StrategySection:
    variant: str = "normmean"
    layer: int = -1  # only read by the single variant
    pooled: str = ""  # "", "meanpool" or "lastpool"
    center_only: bool = False


@dataclass(frozen=True)
class UNetSection:
    base_channels: int = 32
    channel_mults: list = field(default_factory=lambda: [1, 2, 4])
    attn_resolutions: list = field(default_factory=lambda: [16, 8])
    num_heads: int = 4
    cond_dim: int = 64
    time_dim: int = 128
    groups: int = 8


@dataclass(frozen=True)
class ScheduleSection:
    steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass(frozen=True)
class TrainSection:
    steps: int = 20000
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 0.01
    drop_prob: float = 0.1
    seed: int = 0
    log_every: int = 100


@dataclass(frozen=True)
class CorpusSection:
    n_pairs: int = 8192
    n_heldout: int = 400
    seed: int = 0


@dataclass(frozen=True)
class EvalSection:
    guidance: float = 7.0
    sample_steps: int = 250
    sampler: str = "ancestral"
    seeds: list = field(default_factory=lambda: [1, 2, 3])
    batch_size: int = 50


SECTIONS = {
    "encoder": EncoderSection, "strategy": StrategySection, "unet": UNetSection, "schedule": ScheduleSection,
    "train": TrainSection, "corpus": CorpusSection, "eval": EvalSection,
}


@dataclass(frozen=True)
class RunConfig:
    encoder: EncoderSection = field(default_factory=EncoderSection)
    strategy: StrategySection = field(default_factory=StrategySection)
    unet: UNetSection = field(default_factory=UNetSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    train: TrainSection = field(default_factory=TrainSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def extraction(self) -> ExtractionStrategy:
        s = self.strategy
        return ExtractionStrategy(s.variant, s.layer if s.variant == "single" else None, s.pooled or None,
                                  s.center_only)

    def with_strategy(self, strategy: ExtractionStrategy) -> "RunConfig":
        sec = StrategySection(strategy.variant, -1 if strategy.layer is None else strategy.layer,
                              strategy.pooled or "", strategy.center_only)
        return replace(self, strategy=sec)

    def to_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def dumps(self) -> str:
        return dumps_tables(self.to_dict())

    def digest(self) -> str:
        return text_digest(self.dumps())

    def section_digest(self, name: str) -> str:
        return text_digest(dumps_tables({name: asdict(getattr(self, name))}))

    def protocol_digest(self) -> str:
        """Digest of everything except the extraction strategy (the variable a comparison varies)."""
        tables = self.to_dict()
        tables.pop("strategy")
        return text_digest(dumps_tables(tables))

    def encoder_digest(self) -> str:
        return self.section_digest("encoder")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, sec_cls in SECTIONS.items():
            table = dict(data.get(name, {}))
            known = {f.name: f for f in fields(sec_cls)}
            bad = set(table) - set(known)
            if bad:
                raise ConfigurationError(f"[{name}] unknown keys: {sorted(bad)}")
            defaults = sec_cls()
            for key, val in table.items():
                table[key] = _coerce(name, key, val, getattr(defaults, key))
            kwargs[name] = sec_cls(**table)
        cfg = cls(**kwargs)
        validate_config(cfg)
        return cfg

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"config is not valid TOML: {exc}") from None
        data.pop("artifact", None)
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def dumps_tables(tables: dict) -> str:
    return tomli_w.dumps({k: tables[k] for k in tables})


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _coerce(section, key, val, default):
    where = f"[{section}] {key}"
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ConfigurationError(f"{where} must be true/false, got {val!r}")
        return val
    if isinstance(default, int):
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigurationError(f"{where} must be an integer, got {val!r}")
        return val
    if isinstance(default, float):
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigurationError(f"{where} must be a number, got {val!r}")
        return float(val)
    if isinstance(default, str):
        if not isinstance(val, str):
            raise ConfigurationError(f"{where} must be a string, got {val!r}")
        return val
    if isinstance(default, list):
        if not isinstance(val, list) or any(isinstance(v, bool) or not isinstance(v, int) for v in val):
            raise ConfigurationError(f"{where} must be a list of integers, got {val!r}")
        return list(val)
    return val  # pragma: no cover


def validate_config(cfg: RunConfig) -> None:
    e, t, s, ev, u = cfg.encoder, cfg.train, cfg.schedule, cfg.eval, cfg.unet
    if e.kind not in (CAUSAL, BIDIRECTIONAL):
        raise ConfigurationError(f"[encoder] kind must be {CAUSAL!r} or {BIDIRECTIONAL!r}, got {e.kind!r}")
    if e.depth < 1 or e.width < 2 or e.width % e.heads:
        raise ConfigurationError("[encoder] needs depth >= 1 and width divisible by heads")
    if not 0.0 < e.mask_rate < 1.0:
        raise ConfigurationError(f"[encoder] mask_rate must lie in (0, 1), got {e.mask_rate}")
    if not 0.0 <= t.drop_prob <= 1.0:
        raise ConfigurationError(f"[train] drop_prob must lie in [0, 1], got {t.drop_prob}")
    for name, sec in (("encoder", e), ("train", t)):
        if sec.steps < 0 or sec.batch_size < 1 or sec.lr < 0:
            raise ConfigurationError(f"[{name}] steps/batch_size/lr out of range")
    if not 0.0 < s.beta_start <= s.beta_end < 1.0 or s.steps < 1:
        raise ConfigurationError("[schedule] needs steps >= 1 and 0 < beta_start <= beta_end < 1")
    if ev.sampler not in ("ancestral", "ddim"):
        raise ConfigurationError(f"[eval] sampler must be 'ancestral' or 'ddim', got {ev.sampler!r}")
    if not ev.seeds or ev.sample_steps < 1 or ev.batch_size < 1:
        raise ConfigurationError("[eval] needs at least one seed, sample_steps >= 1 and batch_size >= 1")
    if cfg.corpus.n_pairs < 1 or cfg.corpus.n_heldout < 0:
        raise ConfigurationError("[corpus] needs n_pairs >= 1 and n_heldout >= 0")
    if not u.channel_mults:
        raise ConfigurationError("[unet] channel_mults must be nonempty")
    strategy = cfg.extraction()  # raises on unknown variants/pooling
    if strategy.variant == "single" and not 0 <= strategy.layer <= e.depth:
        raise ConfigurationError(f"[strategy] layer {strategy.layer} outside 0..{e.depth}")
