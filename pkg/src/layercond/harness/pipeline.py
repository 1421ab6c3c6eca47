"""Experiment drivers shared by the CLI subcommands."""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

from ..autodiff import AdamW, no_grad
from ..bench import (
    EvalReport, PromptSpec, aggregate, aggregate_rows, caption_words, per_prompt_csv, realize_caption, score,
)
from ..diffusion import (
    DiffusionModel, DropCounter, TrainStreams, UNetConfig, build_schedule, ddpm_sample, from_uint8, to_uint8,
    train_step, write_ppm,
)
from ..errors import ConfigurationError, DataError
from ..extraction import EmbeddingCache, ExtractionStrategy, NullCondition, encode_captions, precompute_cache
from ..text import EncoderConfig, EncoderSchedule, TextEncoder, Vocabulary, tokenize_batch
from ..text import train_causal_lm, train_masked_lm
from ..text.transformer import CAUSAL
from . import rng as streams
from .checkpoint import Checkpoint
from .config import RunConfig, tomllib
from .plots import radar_svg

log = logging.getLogger("layercond")

ENCODER_PREFIX, MODEL_PREFIX = "encoder.", "model."


def default_vocabulary() -> Vocabulary:
    return Vocabulary(caption_words())


def encoder_config(cfg: RunConfig, vocab: Vocabulary) -> EncoderConfig:
    e = cfg.encoder
    return EncoderConfig(e.kind, e.depth, e.width, e.heads, e.ff_mult, e.context, len(vocab))


def unet_config(cfg: RunConfig) -> UNetConfig:
    u = cfg.unet
    return UNetConfig(base_channels=u.base_channels, channel_mults=tuple(u.channel_mults),
                      attn_resolutions=tuple(u.attn_resolutions), num_heads=u.num_heads, cond_dim=u.cond_dim,
                      time_dim=u.time_dim, groups=u.groups, pooled=bool(cfg.strategy.pooled))


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    return p.read_text(encoding="utf-8")


# --- encoders -----------------------------------------------------------------

def train_encoder(cfg: RunConfig, captions: list[str], vocab: Vocabulary):
    e = cfg.encoder
    schedule = EncoderSchedule(e.steps, e.batch_size, e.lr, e.weight_decay)
    seed = streams.substream_int(e.seed, streams.ENCODER)
    ecfg = encoder_config(cfg, vocab)
    if e.kind == CAUSAL:
        result = train_causal_lm(captions, ecfg, schedule, vocab, seed=seed)
    else:
        result = train_masked_lm(captions, ecfg, schedule, vocab, mask_rate=e.mask_rate, seed=seed)
    return result.model, result.losses


def _artifact_text(cfg: RunConfig, kind: str, vocab: Vocabulary, extra: dict | None = None) -> str:
    meta = {"kind": kind, "encoder_digest": cfg.encoder_digest(), "vocab": vocab.tokens}
    meta.update(extra or {})
    return cfg.dumps() + "\n" + tomli_w.dumps({"artifact": meta})


def parse_artifact(text: str) -> tuple[RunConfig, dict]:
    meta = tomllib.loads(text).get("artifact", {})
    return RunConfig.loads(text), meta


def encoder_checkpoint(cfg: RunConfig, encoder: TextEncoder, vocab: Vocabulary) -> Checkpoint:
    tensors = {ENCODER_PREFIX + k: v for k, v in encoder.state_dict().items()}
    return Checkpoint(_artifact_text(cfg, "encoder", vocab), tensors)


def _vocab_from_meta(meta: dict) -> Vocabulary:
    tokens = meta.get("vocab")
    if not tokens:
        raise DataError("checkpoint carries no vocabulary")
    return Vocabulary(tokens[5:])


def _restore_encoder(cfg: RunConfig, vocab: Vocabulary, tensors: dict) -> TextEncoder:
    enc = TextEncoder(encoder_config(cfg, vocab), np.random.default_rng(0))
    enc.load_state_dict({k[len(ENCODER_PREFIX):]: v for k, v in tensors.items() if k.startswith(ENCODER_PREFIX)})
    return enc


@dataclass
class LoadedEncoder:
    config: RunConfig
    encoder: TextEncoder
    vocab: Vocabulary
    digest: str


def load_encoder(path) -> LoadedEncoder:
    ck = Checkpoint.load(path)
    cfg, meta = parse_artifact(ck.config_text)
    if meta.get("kind") != "encoder":
        raise DataError(f"{path} is not an encoder checkpoint")
    vocab = _vocab_from_meta(meta)
    return LoadedEncoder(cfg, _restore_encoder(cfg, vocab, ck.tensors), vocab, meta["encoder_digest"])


def check_encoder_digest(cfg: RunConfig, loaded: LoadedEncoder) -> None:
    if cfg.encoder_digest() != loaded.digest:
        raise ConfigurationError(f"encoder digest mismatch: run config {cfg.encoder_digest()} vs "
                                 f"encoder checkpoint {loaded.digest}")


# --- features -------------------------------------------------------------------

def build_cache(captions, encoder: TextEncoder, vocab: Vocabulary, strategy: ExtractionStrategy) -> EmbeddingCache:
    return precompute_cache(captions, encoder, vocab, strategy)


def caption_features(captions: list[str], encoder: TextEncoder, vocab: Vocabulary, strategy: ExtractionStrategy,
                     cache: EmbeddingCache | None = None):
    """Unique-caption feature table, masks and a per-caption row index."""
    unique = list(dict.fromkeys(captions))
    if cache is None:
        cache = build_cache(unique, encoder, vocab, strategy)
    else:
        cache.check_strategy(strategy.tag)
        cache.check_encoder(encoder.config.digest())
    feats = np.stack([cache.lookup(c) for c in unique]) if unique else np.zeros((0,), np.float32)
    _, masks = tokenize_batch(unique, vocab, encoder.config.context)
    where = {c: i for i, c in enumerate(unique)}
    return feats, masks, np.array([where[c] for c in captions], dtype=np.int64)


# --- diffusion training ---------------------------------------------------------

@dataclass
class DiffusionRun:
    model: DiffusionModel
    losses: list[float]
    counter: DropCounter


def train_diffusion(cfg: RunConfig, captions: list[str], images: np.ndarray, encoder: TextEncoder,
                    vocab: Vocabulary, cache: EmbeddingCache | None = None, progress=None) -> DiffusionRun:
    if not captions:
        raise DataError("diffusion training corpus is empty")
    strategy = cfg.extraction()
    strategy.validate_depth(encoder.config.depth)
    t = cfg.train
    root = t.seed
    feats, masks, rows_of = caption_features(captions, encoder, vocab, strategy, cache)
    null = NullCondition(encoder, vocab, strategy)
    model = DiffusionModel(unet_config(cfg), encoder.config.width, strategy, streams.substream(root, streams.INIT))
    opt = AdamW(model.parameters(), lr=t.lr, weight_decay=t.weight_decay)
    schedule = build_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end)
    train_streams = TrainStreams(streams.substream(root, streams.DROP), streams.substream(root, streams.TIMESTEPS),
                                 streams.substream(root, streams.NOISE))
    batches = streams.substream(root, streams.BATCHES)
    images_f = from_uint8(images) if images.dtype == np.uint8 else np.asarray(images, np.float32)
    counter = DropCounter()
    losses = []
    for step in range(t.steps):
        idx = batches.integers(0, len(captions), size=t.batch_size)
        rows = rows_of[idx]
        loss = train_step(model, images_f[idx], feats[rows], masks[rows], null, schedule, t.drop_prob,
                          train_streams, opt, counter, strategy_tag=strategy.tag)
        losses.append(loss)
        if progress is not None and (step + 1) % max(1, t.log_every) == 0:
            progress(step + 1, float(np.mean(losses[-t.log_every:])))
    return DiffusionRun(model, losses, counter)


def model_checkpoint(cfg: RunConfig, model: DiffusionModel, encoder: TextEncoder, vocab: Vocabulary) -> Checkpoint:
    tensors = {ENCODER_PREFIX + k: v for k, v in encoder.state_dict().items()}
    tensors.update({MODEL_PREFIX + k: v for k, v in model.state_dict().items()})
    return Checkpoint(_artifact_text(cfg, "diffusion", vocab, {"strategy": model.strategy.tag}), tensors)


@dataclass
class LoadedModel:
    config: RunConfig
    model: DiffusionModel
    encoder: TextEncoder
    vocab: Vocabulary


def load_model(path) -> LoadedModel:
    ck = Checkpoint.load(path)
    cfg, meta = parse_artifact(ck.config_text)
    if meta.get("kind") != "diffusion":
        raise DataError(f"{path} is not a diffusion checkpoint")
    vocab = _vocab_from_meta(meta)
    encoder = _restore_encoder(cfg, vocab, ck.tensors)
    model = DiffusionModel(unet_config(cfg), encoder.config.width, cfg.extraction(), np.random.default_rng(0))
    model.load_state_dict({k[len(MODEL_PREFIX):]: v for k, v in ck.tensors.items() if k.startswith(MODEL_PREFIX)})
    return LoadedModel(cfg, model, encoder, vocab)


# --- evaluation -----------------------------------------------------------------

@dataclass
class EvalResult:
    per_seed: dict[int, EvalReport]
    pooled: EvalReport
    images: dict[int, np.ndarray] = field(default_factory=dict)  # seed -> (N, 32, 32, 3) uint8


def check_vocabulary(captions: list[str], vocab: Vocabulary) -> None:
    bad = sorted({w for c in captions for w in vocab.unknown_words(c)})
    if bad:
        raise DataError(f"prompt words missing from the encoder vocabulary: {', '.join(bad)}")


def sample_images(loaded: LoadedModel, captions: list[str], seed: int, w: float, steps: int, sampler: str,
                  batch_size: int, unconditional: bool = False) -> np.ndarray:
    model, encoder, vocab = loaded.model, loaded.encoder, loaded.vocab
    strategy = model.strategy
    feats, masks = encode_captions(captions, encoder, vocab, strategy)
    null = NullCondition(encoder, vocab, strategy)
    cfg = loaded.config
    schedule = build_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end)
    out = np.zeros((len(captions), model.config.image_size, model.config.image_size, 3), np.uint8)
    with no_grad():
        for start in range(0, len(captions), batch_size):
            stop = min(start + batch_size, len(captions))
            n = stop - start
            null_b = model.bundle(np.broadcast_to(null.features, (n,) + null.features.shape),
                                  np.broadcast_to(null.mask, (n,) + null.mask.shape), is_null=True)
            cond = null_b if unconditional else model.bundle(feats[start:stop], masks[start:stop])
            rng = streams.substream(seed, f"{streams.SAMPLING}:{start}")
            x = ddpm_sample(model, cond, null_b, w, schedule, rng, steps=steps, sampler=sampler)
            out[start:stop] = to_uint8(x)
    return out


def evaluate(loaded: LoadedModel, specs: list[PromptSpec], seeds, w: float, steps: int, sampler: str,
             batch_size: int, metadata: dict | None = None, unconditional: bool = False,
             keep_images: bool = False) -> EvalResult:
    captions = [realize_caption(s) for s in specs]
    check_vocabulary(captions, loaded.vocab)
    seeds = list(dict.fromkeys(int(s) for s in seeds))
    per_seed, images = {}, {}
    table = np.zeros((len(seeds), len(specs)))
    meta = dict(metadata or {})
    meta.update({"strategy": loaded.model.strategy.tag, "guidance": repr(float(w)), "sample_steps": str(steps),
                 "sampler": sampler})
    for i, seed in enumerate(seeds):
        imgs = sample_images(loaded, captions, seed, w, steps, sampler, batch_size, unconditional)
        table[i] = [score(img, spec) for img, spec in zip(imgs, specs)]
        per_seed[seed] = aggregate(table[i], specs, [seed], meta)
        if keep_images:
            images[seed] = imgs
        log.info("seed %d: aggregate %.4f", seed, per_seed[seed].aggregate)
    pooled = aggregate(table.mean(axis=0), specs, seeds, meta)
    return EvalResult(per_seed, pooled, images)


def write_evaluation(out: Path, result: EvalResult, label: str, run_meta: dict | None = None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for seed, rep in result.per_seed.items():
        (out / f"seed{seed}_prompts.csv").write_text(per_prompt_csv(rep))
        (out / f"seed{seed}_aggregate.csv").write_text(aggregate_rows([(label, rep)]))
    pooled = aggregate_rows([(label, result.pooled)])
    (out / "prompts.csv").write_text(per_prompt_csv(result.pooled))
    (out / "aggregate.csv").write_text(pooled)
    (out / "aggregate.sha256").write_text(hashlib.sha256(pooled.encode()).hexdigest() + "\n")
    (out / "radar.svg").write_text(radar_svg([(label, result.pooled.skills)]))
    meta = {"label": label, "seeds": list(result.pooled.seeds), **result.pooled.metadata, **(run_meta or {})}
    (out / "run.toml").write_text(tomli_w.dumps({"run": meta}))
    for seed, imgs in result.images.items():
        img_dir = out / f"images_seed{seed}"
        img_dir.mkdir(exist_ok=True)
        for k, img in enumerate(imgs):
            write_ppm(img_dir / f"{k:04d}.ppm", img)


def output_root() -> Path:
    return Path(os.environ.get("LAYERCOND_OUT", "runs"))
