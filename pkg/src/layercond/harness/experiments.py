"""Multi-run drivers: strategy comparison, layer sweep, guidance sweep, heatmaps and reports."""

from __future__ import annotations

import csv
import io
import logging
from pathlib import Path

import numpy as np
import tomli_w

from ..autodiff import no_grad
from ..bench import SKILLS, aggregate_rows, loads_corpus, loads_prompts, read_aggregate_csv
from ..bench.report import SKILL_COLUMNS
from ..diffusion import build_schedule, capture_attention, ddpm_sample, respaced, write_pgm
from ..errors import ConfigurationError, ContractError, DataError
from ..extraction import ExtractionStrategy, NullCondition, encode_captions
from . import rng as streams
from .config import RunConfig, tomllib
from .pipeline import (
    LoadedEncoder, LoadedModel, check_encoder_digest, evaluate, model_checkpoint, read_text, train_diffusion,
    write_evaluation,
)
from .plots import contact_sheet_svg, line_svg, radar_svg

log = logging.getLogger("layercond")


def load_corpus(path):
    return loads_corpus(read_text(path))


def load_prompts(path):
    specs = loads_prompts(read_text(path))
    if not specs:
        raise DataError(f"prompt file {path} holds no prompts")
    return specs


def budget_meta(cfg: RunConfig, n_pairs: int, n_prompts: int, seeds, w: float, steps: int, benchmark: str) -> dict:
    return {"n_pairs": n_pairs, "train_steps": cfg.train.steps, "batch_size": cfg.train.batch_size,
            "n_prompts": n_prompts, "guidance": float(w), "seeds": list(seeds), "sample_steps": steps,
            "benchmark": benchmark, "config_digest": cfg.digest(),
            "protocol_digest": cfg.protocol_digest(), "encoder_digest": cfg.encoder_digest()}


def write_losses(path: Path, losses) -> None:
    path.write_text("step,loss\n" + "".join(f"{i + 1},{v:.6f}\n" for i, v in enumerate(losses)))


def train_and_evaluate(cfg: RunConfig, enc: LoadedEncoder, corpus, specs, out: Path, label: str, seeds, w: float,
                       steps: int, benchmark: str):
    check_encoder_digest(cfg, enc)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(cfg.dumps())
    log.info("[%s] training %d steps", label, cfg.train.steps)
    run = train_diffusion(cfg, corpus.captions, corpus.images, enc.encoder, enc.vocab,
                          progress=lambda s, l: log.info("[%s] step %d loss %.4f", label, s, l))
    write_losses(out / "loss.csv", run.losses)
    ck = model_checkpoint(cfg, run.model, enc.encoder, enc.vocab)
    ck.save(out / "model.ckpt")
    loaded = LoadedModel(cfg, run.model, enc.encoder, enc.vocab)
    result = evaluate(loaded, specs, seeds, w, steps, cfg.eval.sampler, cfg.eval.batch_size)
    meta = budget_meta(cfg, len(corpus), len(specs), seeds, w, steps, benchmark)
    write_evaluation(out, result, label, meta)
    return result


def _differences(labels, results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    base = labels[0]
    w.writerow(["prompt_id", "tags"] + [f"score_{l}" for l in labels] + [f"diff_{l}_minus_{base}" for l in labels[1:]])
    first = results[0].pooled
    for i, tags in enumerate(first.tags):
        sc = [r.pooled.scores[i] for r in results]
        w.writerow([i, "|".join(k for k in SKILLS if k in tags)] + [f"{s:.6f}" for s in sc]
                   + [f"{s - sc[0]:.6f}" for s in sc[1:]])
    return buf.getvalue()


def compare_strategies(cfg: RunConfig, enc: LoadedEncoder, corpus, specs, strategies: list[ExtractionStrategy],
                       out: Path, benchmark: str, pooled_kind: str | None = None) -> str:
    if not strategies:
        raise ConfigurationError("need at least one strategy")
    runs = list(strategies)
    if pooled_kind:
        runs += [ExtractionStrategy(s.variant, s.layer, pooled_kind, s.center_only) for s in strategies]
    for s in runs:
        s.validate_depth(enc.encoder.config.depth)
    seeds, w, steps = cfg.eval.seeds, cfg.eval.guidance, cfg.eval.sample_steps
    labels, results = [], []
    for s in runs:
        label = s.tag
        res = train_and_evaluate(cfg.with_strategy(s), enc, corpus, specs, out / label.replace(":", "_"), label,
                                 seeds, w, steps, benchmark)
        labels.append(label)
        results.append(res)
    table = aggregate_rows(list(zip(labels, (r.pooled for r in results))),
                           {"pooled": [s.pooled or "none" for s in runs]})
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.csv").write_text(table)
    (out / "differences.csv").write_text(_differences(labels, results))
    (out / "radar.svg").write_text(radar_svg([(l, r.pooled.skills) for l, r in zip(labels, results)]))
    meta = budget_meta(cfg, len(corpus), len(specs), seeds, w, steps, benchmark)
    meta["strategies"] = labels
    (out / "experiment.toml").write_text(tomli_w.dumps({"experiment": meta}))
    return table


def default_layers(depth: int) -> list[int]:
    return sorted({0, depth // 2, depth - 1, depth})


def sweep_layers(cfg: RunConfig, enc: LoadedEncoder, corpus, specs, layers: list[int] | None, out: Path,
                 benchmark: str) -> str:
    depth = enc.encoder.config.depth
    layers = default_layers(depth) if layers is None else list(dict.fromkeys(layers))
    bad = [k for k in layers if not 0 <= k <= depth]
    if bad:
        raise ConfigurationError(f"layer indices {bad} outside 0..{depth}")
    seeds, w, steps = cfg.eval.seeds, cfg.eval.guidance, cfg.eval.sample_steps
    runs = [ExtractionStrategy("single", k) for k in layers] + [ExtractionStrategy("last")]
    labels, results = [], []
    for s in runs:
        res = train_and_evaluate(cfg.with_strategy(s), enc, corpus, specs, out / s.tag.replace(":", "_"), s.tag,
                                 seeds, w, steps, benchmark)
        labels.append(s.tag)
        results.append(res)
    table = aggregate_rows(list(zip(labels, (r.pooled for r in results))),
                           {"layer": [str(s.layer) if s.layer is not None else "last" for s in runs]})
    out.mkdir(parents=True, exist_ok=True)
    (out / "layers.csv").write_text(table)
    meta = budget_meta(cfg, len(corpus), len(specs), seeds, w, steps, benchmark)
    meta["layers"] = layers
    (out / "experiment.toml").write_text(tomli_w.dumps({"experiment": meta}))
    return table


def dedupe_weights(ws: list[float]) -> tuple[list[float], list[float]]:
    seen, out, dups = set(), [], []
    for w in ws:
        if w in seen:
            dups.append(w)
        else:
            seen.add(w)
            out.append(w)
    return out, dups


def sweep_guidance(loaded: LoadedModel, specs, ws: list[float], seeds, steps: int, out: Path) -> str:
    ws, dups = dedupe_weights([float(w) for w in ws])
    if dups:
        log.warning("duplicate guidance weights dropped: %s", ", ".join(f"{w:g}" for w in dups))
    if len(ws) < 2:
        raise ConfigurationError("a guidance sweep needs at least two distinct weights")
    cfg = loaded.config
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["w", "avg"] + [SKILL_COLUMNS[s] for s in SKILLS])
    series = {"avg": []} | {SKILL_COLUMNS[s]: [] for s in SKILLS}
    for w in ws:
        res = evaluate(loaded, specs, seeds, w, steps, cfg.eval.sampler, cfg.eval.batch_size)
        rep = res.pooled
        wr.writerow([f"{w:g}", f"{rep.aggregate:.6f}"] + ["" if rep.skills[s] is None else f"{rep.skills[s]:.6f}"
                                                         for s in SKILLS])
        series["avg"].append(rep.aggregate)
        for s in SKILLS:
            series[SKILL_COLUMNS[s]].append(rep.skills[s])
    out.mkdir(parents=True, exist_ok=True)
    (out / "guidance.csv").write_text(buf.getvalue())
    (out / "guidance.svg").write_text(line_svg(ws, series, "guidance weight", "alignment"))
    return buf.getvalue()


def token_position(caption: str, token: str) -> int:
    words = caption.split()
    if token not in words:
        raise DataError(f"token {token!r} not in caption; available tokens: {', '.join(words)}")
    return words.index(token) + 1  # after BOS


def heatmap(loaded: LoadedModel, caption: str, token: str, t_list: list[int], seed: int, out: Path,
            steps: int | None = None) -> list[Path]:
    idx = token_position(caption, token)
    model, enc, vocab = loaded.model, loaded.encoder, loaded.vocab
    cfg = loaded.config
    schedule = build_schedule(cfg.schedule.steps, cfg.schedule.beta_start, cfg.schedule.beta_end)
    steps = steps or cfg.eval.sample_steps
    grid = respaced(schedule, steps)
    wanted = {}
    for t in t_list:
        if not 0 <= t < schedule.steps:
            raise ConfigurationError(f"timestep {t} outside 0..{schedule.steps - 1}")
        wanted[int(grid[np.abs(grid - t).argmin()])] = t  # snap to the sampling grid
    feats, masks = encode_captions([caption], enc, vocab, model.strategy)
    null = NullCondition(enc, vocab, model.strategy)
    cond = model.bundle(feats, masks)
    null_b = model.bundle(null.features[None], null.mask[None], is_null=True)
    captured = {}

    def grab(t, x):
        if t in wanted:
            captured[t] = capture_attention(model, x, t, cond, idx)

    with no_grad():
        ddpm_sample(model, cond, null_b, cfg.eval.guidance, schedule, streams.substream(seed, streams.SAMPLING),
                    steps=steps, sampler=cfg.eval.sampler, callback=grab)
    out.mkdir(parents=True, exist_ok=True)
    written, sheet = [], []
    for t in sorted(captured, reverse=True):
        records, maps = captured[t]
        for site, (rec, m) in enumerate(zip(records, maps)):
            path = out / f"heatmap_t{t:04d}_site{site}_r{rec.resolution}.pgm"
            write_pgm(path, m[0])
            written.append(path)
            sheet.append((f"t={t} r={rec.resolution}", m[0].tolist()))
    (out / "contact.svg").write_text(contact_sheet_svg(sheet))
    return written


def report(run_dirs: list[Path], out: Path) -> str:
    if not run_dirs:
        raise ContractError("report needs at least one run directory")
    rows_text, metas, series = [], [], []
    for d in run_dirs:
        agg = (d / "aggregate.csv")
        meta = d / "run.toml"
        if not agg.is_file() or not meta.is_file():
            raise DataError(f"{d} is not a completed run directory (aggregate.csv/run.toml missing)")
        text = agg.read_text()
        rows = read_aggregate_csv(text)
        rows_text.append(text.splitlines())
        metas.append(tomllib.loads(meta.read_text())["run"])
        for r in rows:
            series.append((r["label"], {s: (float(r[SKILL_COLUMNS[s]]) if r[SKILL_COLUMNS[s]] else None)
                                        for s in SKILLS}))
    benches = {m.get("benchmark") for m in metas}
    if len(benches) > 1:
        raise DataError("runs were evaluated on different benchmark files; refusing to merge")
    header = rows_text[0][0]
    if any(lines[0] != header for lines in rows_text):
        raise DataError("aggregate CSVs have different headers")
    summary = "\n".join([header] + [line for lines in rows_text for line in lines[1:]]) + "\n"
    notes = []
    for key, what in (("protocol_digest", "training/evaluation protocol"), ("config_digest", "config")):
        digests = sorted({str(m.get(key, "")) for m in metas})
        if len(digests) > 1:
            notes.append(f"{what} digests differ across runs: {', '.join(digests)}")
    if len({str(m.get("protocol_digest", "")) for m in metas}) > 1:
        log.warning(notes[0])
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary)
    md = ["| " + " | ".join(header.split(",")) + " |", "|" + "---|" * len(header.split(","))]
    md += ["| " + " | ".join(line.split(",")) + " |" for lines in rows_text for line in lines[1:]]
    (out / "summary.md").write_text("\n".join(md + [""] + [f"> {n}" for n in notes]) + "\n")
    (out / "radar.svg").write_text(radar_svg(series))
    return summary
