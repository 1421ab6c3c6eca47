"""Command-line entry point: ``layercond <subcommand> ...``.

Exit status is 0 on success, 2 for configuration or usage errors and 1 for
data, integrity and other runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import tomli_w
from threadpoolctl import threadpool_limits

from ..bench import build_corpus, dumps_corpus, dumps_prompts
from ..errors import ConfigurationError, ContractError, DataError, IntegrityError, StrategyIndexError
from ..extraction import EmbeddingCache, ExtractionStrategy, precompute_cache
from . import experiments as ex
from . import rng as streams
from .config import RunConfig, tomllib
from .pipeline import (
    LoadedEncoder, check_encoder_digest, default_vocabulary, encoder_checkpoint, evaluate, file_digest, load_encoder,
    load_model, model_checkpoint, output_root, train_diffusion, train_encoder, write_evaluation,
)

log = logging.getLogger("layercond")

USAGE_ERRORS = (ConfigurationError, ContractError, StrategyIndexError)
SWEEP_SAMPLE_STEPS = 50


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _override(cfg: RunConfig, section: str, **values) -> RunConfig:
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    cfg = replace(cfg, **{section: replace(getattr(cfg, section), **values)})
    return RunConfig.from_dict(cfg.to_dict())  # re-validate


def _base_config(args, fallback: RunConfig | None = None) -> RunConfig:
    if args.config:
        if not Path(args.config).is_file():
            raise FileNotFoundError(f"no such config file: {args.config}")
        return RunConfig.load(args.config)
    return fallback if fallback is not None else RunConfig()


def _out(args, default: str) -> Path:
    return Path(args.out) if args.out else output_root() / default


def _eval_overrides(cfg: RunConfig, args) -> RunConfig:
    return _override(cfg, "eval", guidance=getattr(args, "guidance", None),
                     sample_steps=getattr(args, "sample_steps", None), sampler=getattr(args, "sampler", None),
                     seeds=getattr(args, "seeds", None), batch_size=getattr(args, "eval_batch", None))


def _train_overrides(cfg: RunConfig, args) -> RunConfig:
    return _override(cfg, "train", steps=getattr(args, "steps", None), batch_size=getattr(args, "batch_size", None),
                     seed=args.seed)


def _config_for_encoder(args, enc: LoadedEncoder) -> RunConfig:
    cfg = _base_config(args, enc.config)
    check_encoder_digest(cfg, enc)
    return cfg


def _sweep_config(args, enc):
    cfg = _train_overrides(_config_for_encoder(args, enc), args)
    if args.sample_steps is None:
        args.sample_steps = SWEEP_SAMPLE_STEPS
    return _eval_overrides(cfg, args)


# --- subcommands --------------------------------------------------------------

def cmd_build_corpus(args) -> None:
    cfg = _override(_base_config(args), "corpus", n_pairs=args.n_pairs, n_heldout=args.n_heldout, seed=args.seed)
    c = cfg.corpus
    corpus = build_corpus(c.n_pairs, streams.substream(c.seed, streams.CORPUS), n_heldout=c.n_heldout)
    out = _out(args, "corpus")
    out.mkdir(parents=True, exist_ok=True)
    (out / "corpus.tsv").write_text(dumps_corpus(corpus))
    (out / "heldout.txt").write_text(dumps_prompts(corpus.heldout))
    meta = {"n_pairs": len(corpus), "n_heldout": len(corpus.heldout), "seed": c.seed,
            "corpus_sha256": file_digest(out / "corpus.tsv"), "heldout_sha256": file_digest(out / "heldout.txt")}
    (out / "manifest.toml").write_text(tomli_w.dumps({"corpus": meta}))
    print(f"wrote {len(corpus)} pairs and {len(corpus.heldout)} held-out prompts to {out}")


def cmd_train_encoder(args) -> None:
    cfg = _override(_base_config(args), "encoder", kind=args.kind, steps=args.steps, seed=args.seed)
    corpus = ex.load_corpus(args.corpus)
    vocab = default_vocabulary()
    encoder, losses = train_encoder(cfg, corpus.captions, vocab)
    out = _out(args, "encoder")
    out.mkdir(parents=True, exist_ok=True)
    encoder_checkpoint(cfg, encoder, vocab).save(out / "encoder.ckpt")
    ex.write_losses(out / "loss.csv", losses)
    print(f"encoder {cfg.encoder_digest()} final loss {losses[-1] if losses else float('nan'):.4f} -> {out}")


def cmd_precompute_cache(args) -> None:
    enc = load_encoder(args.encoder)
    strategy = ExtractionStrategy.parse(args.strategy)
    strategy.validate_depth(enc.encoder.config.depth)
    corpus = ex.load_corpus(args.corpus)
    cache = precompute_cache(corpus.captions, enc.encoder, enc.vocab, strategy)
    out = Path(args.out) if args.out else output_root() / f"cache_{strategy.tag.replace(':', '_')}.emb"
    out.parent.mkdir(parents=True, exist_ok=True)
    cache.save(out)
    print(f"cached {len(cache)} captions ({strategy.tag}) -> {out}")


def cmd_train_diffusion(args) -> None:
    enc = load_encoder(args.encoder)
    cfg = _train_overrides(_config_for_encoder(args, enc), args)
    if args.strategy:
        cfg = cfg.with_strategy(ExtractionStrategy.parse(args.strategy))
    cfg.extraction().validate_depth(enc.encoder.config.depth)
    corpus = ex.load_corpus(args.corpus)
    cache = EmbeddingCache.load(args.cache) if args.cache else None
    out = _out(args, "diffusion")
    out.mkdir(parents=True, exist_ok=True)
    run = train_diffusion(cfg, corpus.captions, corpus.images, enc.encoder, enc.vocab, cache,
                          progress=lambda s, l: log.info("step %d loss %.4f", s, l))
    (out / "config.toml").write_text(cfg.dumps())
    ex.write_losses(out / "loss.csv", run.losses)
    model_checkpoint(cfg, run.model, enc.encoder, enc.vocab).save(out / "model.ckpt")
    d = run.counter
    (out / "train.toml").write_text(tomli_w.dumps({"train": {
        "steps": cfg.train.steps, "batch_size": cfg.train.batch_size, "n_pairs": len(corpus),
        "drop_samples": d.samples, "drop_dropped": d.dropped, "config_digest": cfg.digest()}}))
    print(f"trained {cfg.extraction().tag} for {cfg.train.steps} steps -> {out}")


def cmd_evaluate(args) -> None:
    loaded = load_model(args.model)
    cfg = _eval_overrides(loaded.config, args)
    specs = ex.load_prompts(args.prompts)
    e = cfg.eval
    result = evaluate(loaded, specs, e.seeds, e.guidance, e.sample_steps, e.sampler, e.batch_size,
                      unconditional=args.unconditional, keep_images=args.save_images)
    out = _out(args, "eval")
    label = args.label or loaded.model.strategy.tag
    meta = ex.budget_meta(cfg, _train_pairs(args.model), len(specs), e.seeds, e.guidance, e.sample_steps,
                          file_digest(args.prompts))
    meta["unconditional"] = bool(args.unconditional)
    write_evaluation(out, result, label, meta)
    print((out / "aggregate.csv").read_text(), end="")


def _train_pairs(model_path) -> int:
    # train.toml sits next to checkpoints written by train-diffusion / experiment drivers
    side = Path(model_path).parent / "train.toml"
    if side.is_file():
        return int(tomllib.loads(side.read_text())["train"].get("n_pairs", -1))
    return -1


def cmd_sweep_guidance(args) -> None:
    loaded = load_model(args.model)
    if args.sample_steps is None:
        args.sample_steps = SWEEP_SAMPLE_STEPS
    cfg = _eval_overrides(loaded.config, args)
    loaded.config = cfg
    specs = ex.load_prompts(args.prompts)
    text = ex.sweep_guidance(loaded, specs, args.weights, cfg.eval.seeds, cfg.eval.sample_steps,
                             _out(args, "sweep_guidance"))
    print(text, end="")


def cmd_sweep_layers(args) -> None:
    enc = load_encoder(args.encoder)
    cfg = _sweep_config(args, enc)
    corpus, specs = ex.load_corpus(args.corpus), ex.load_prompts(args.prompts)
    text = ex.sweep_layers(cfg, enc, corpus, specs, args.layers, _out(args, "sweep_layers"), file_digest(args.prompts))
    print(text, end="")


def cmd_compare_strategies(args) -> None:
    enc = load_encoder(args.encoder)
    cfg = _sweep_config(args, enc)
    strategies = [ExtractionStrategy.parse(t) for t in args.strategies.split(",") if t.strip()]
    corpus, specs = ex.load_corpus(args.corpus), ex.load_prompts(args.prompts)
    text = ex.compare_strategies(cfg, enc, corpus, specs, strategies, _out(args, "compare"),
                                 file_digest(args.prompts), pooled_kind=args.pooled)
    print(text, end="")


def cmd_heatmap(args) -> None:
    loaded = load_model(args.model)
    seed = args.seed if args.seed is not None else loaded.config.eval.seeds[0]
    out = _out(args, "heatmap")
    written = ex.heatmap(loaded, args.caption, args.token, args.timesteps, seed, out, args.sample_steps)
    print(f"wrote {len(written)} heatmaps to {out}")


def cmd_report(args) -> None:
    text = ex.report([Path(d) for d in args.runs], _out(args, "report"))
    print(text, end="")


# --- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="run config TOML")
    common.add_argument("--seed", type=int, help="root seed override")
    common.add_argument("--out", help="output path (default under $LAYERCOND_OUT or ./runs)")
    common.add_argument("--threads", type=int, help="BLAS thread limit")
    common.add_argument("-v", "--verbose", action="store_true")

    evalopts = _Parser(add_help=False)
    evalopts.add_argument("--guidance", type=float)
    evalopts.add_argument("--sample-steps", type=int)
    evalopts.add_argument("--sampler", choices=["ancestral", "ddim"])
    evalopts.add_argument("--seeds", type=_ints, help="comma-separated sampling seeds")
    evalopts.add_argument("--eval-batch", type=int)

    trainopts = _Parser(add_help=False)
    trainopts.add_argument("--encoder", required=True, help="encoder checkpoint")
    trainopts.add_argument("--corpus", required=True, help="corpus.tsv")
    trainopts.add_argument("--steps", type=int)
    trainopts.add_argument("--batch-size", type=int)

    p = _Parser(prog="layercond", description="layer-aggregated text conditioning experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build-corpus", parents=[common])
    s.add_argument("--n-pairs", type=int)
    s.add_argument("--n-heldout", type=int)
    s.set_defaults(func=cmd_build_corpus)

    s = sub.add_parser("train-encoder", parents=[common])
    s.add_argument("--corpus", required=True)
    s.add_argument("--kind", choices=["causal", "bidirectional"])
    s.add_argument("--steps", type=int)
    s.set_defaults(func=cmd_train_encoder)

    s = sub.add_parser("precompute-cache", parents=[common])
    s.add_argument("--encoder", required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--strategy", required=True, help="strategy tag, e.g. normmean or single:2+meanpool")
    s.set_defaults(func=cmd_precompute_cache)

    s = sub.add_parser("train-diffusion", parents=[common, trainopts])
    s.add_argument("--strategy")
    s.add_argument("--cache", help="embedding cache from precompute-cache")
    s.set_defaults(func=cmd_train_diffusion)

    s = sub.add_parser("evaluate", parents=[common, evalopts])
    s.add_argument("--model", required=True)
    s.add_argument("--prompts", required=True)
    s.add_argument("--label")
    s.add_argument("--unconditional", action="store_true")
    s.add_argument("--save-images", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep-guidance", parents=[common, evalopts])
    s.add_argument("--model", required=True)
    s.add_argument("--prompts", required=True)
    s.add_argument("--weights", type=_floats, required=True, help="comma-separated guidance weights")
    s.set_defaults(func=cmd_sweep_guidance)

    s = sub.add_parser("sweep-layers", parents=[common, evalopts, trainopts])
    s.add_argument("--prompts", required=True)
    s.add_argument("--layers", type=_ints, help="comma-separated layer indices (default 0, L/2, L-1, L)")
    s.set_defaults(func=cmd_sweep_layers)

    s = sub.add_parser("compare-strategies", parents=[common, evalopts, trainopts])
    s.add_argument("--prompts", required=True)
    s.add_argument("--strategies", default="last,mean,normmean")
    s.add_argument("--pooled", choices=["meanpool", "lastpool"], help="also run each strategy with a pooled vector")
    s.set_defaults(func=cmd_compare_strategies)

    s = sub.add_parser("heatmap", parents=[common])
    s.add_argument("--model", required=True)
    s.add_argument("--caption", required=True)
    s.add_argument("--token", required=True)
    s.add_argument("--timesteps", type=_ints, default=[999, 750, 500, 250, 50])
    s.add_argument("--sample-steps", type=int)
    s.set_defaults(func=cmd_heatmap)

    s = sub.add_parser("report", parents=[common])
    s.add_argument("runs", nargs="+", help="run directories holding aggregate.csv and run.toml")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigurationError("--threads must be >= 1")
            with threadpool_limits(limits=args.threads):
                args.func(args)
        else:
            args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, IntegrityError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything else is still a runtime failure, not a usage error
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
