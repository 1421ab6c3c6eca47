import csv
import hashlib
import io
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layercond.errors import ConfigurationError, IntegrityError
from layercond.harness import Checkpoint, RunConfig, stream_seed, substream
from layercond.harness.cli import main
from layercond.harness.config import (
    CorpusSection, EncoderSection, EvalSection, ScheduleSection, StrategySection, TrainSection, UNetSection,
)
from layercond.harness.pipeline import load_model
from layercond.harness.plots import contact_sheet_svg, line_svg, radar_svg

TINY = """
[encoder]
depth = 4
width = 16
heads = 2
ff_mult = 2
context = 32
steps = 20
batch_size = 8

[unet]
base_channels = 8
channel_mults = [1, 2]
attn_resolutions = [16]
num_heads = 2
cond_dim = 8
time_dim = 16
groups = 4

[train]
steps = 3
batch_size = 4
log_every = 1

[corpus]
n_pairs = 24
n_heldout = 8

[eval]
sample_steps = 2
seeds = [1, 2, 3]
batch_size = 8
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="session")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("harness")
    (root / "tiny.toml").write_text(TINY)
    assert run("build-corpus", "--config", root / "tiny.toml", "--out", root / "corpus") == 0
    assert run("train-encoder", "--config", root / "tiny.toml", "--corpus", root / "corpus/corpus.tsv",
               "--out", root / "enc") == 0
    assert run("train-diffusion", "--config", root / "tiny.toml", "--encoder", root / "enc/encoder.ckpt",
               "--corpus", root / "corpus/corpus.tsv", "--out", root / "diff") == 0
    return root


def paths(work):
    return {"cfg": work / "tiny.toml", "corpus": work / "corpus/corpus.tsv", "prompts": work / "corpus/heldout.txt",
            "enc": work / "enc/encoder.ckpt", "model": work / "diff/model.ckpt"}


# --- config -------------------------------------------------------------------

ints = st.integers(1, 64)
configs = st.builds(
    RunConfig,
    encoder=st.builds(EncoderSection, kind=st.sampled_from(["causal", "bidirectional"]), depth=st.integers(1, 6),
                      width=st.sampled_from([16, 32, 64]), heads=st.sampled_from([1, 2, 4]), ff_mult=ints,
                      context=ints, steps=st.integers(0, 10_000), batch_size=ints, lr=st.floats(0, 1),
                      weight_decay=st.floats(0, 1), mask_rate=st.floats(0.01, 0.99), seed=st.integers(0, 2**31)),
    strategy=st.one_of(
        st.builds(StrategySection, variant=st.sampled_from(["last", "mean", "normmean"]),
                  pooled=st.sampled_from(["", "meanpool", "lastpool"])),
        st.builds(StrategySection, variant=st.just("single"), layer=st.integers(0, 1)),
        st.builds(StrategySection, variant=st.just("normmean"), center_only=st.just(True))),
    unet=st.builds(UNetSection, base_channels=st.sampled_from([8, 16, 32]),
                   channel_mults=st.lists(st.integers(1, 4), min_size=1, max_size=3)),
    schedule=st.builds(ScheduleSection, steps=st.integers(1, 2000), beta_start=st.floats(1e-5, 1e-3),
                       beta_end=st.floats(1e-3, 0.5)),
    train=st.builds(TrainSection, steps=st.integers(0, 50_000), drop_prob=st.floats(0, 1), lr=st.floats(0, 1)),
    corpus=st.builds(CorpusSection, n_pairs=st.integers(1, 10**5), n_heldout=st.integers(0, 1000)),
    eval=st.builds(EvalSection, guidance=st.floats(-10, 30), sampler=st.sampled_from(["ancestral", "ddim"]),
                   seeds=st.lists(st.integers(0, 2**31), min_size=1, max_size=4)),
)


class TestConfig:
    @settings(max_examples=100, deadline=None)
    @given(configs)
    def test_round_trip(self, cfg):
        assert RunConfig.loads(cfg.dumps()) == cfg
        assert RunConfig.loads(cfg.dumps()).digest() == cfg.digest()

    def test_defaults(self):
        cfg = RunConfig()
        assert (cfg.train.steps, cfg.train.batch_size, cfg.train.drop_prob, cfg.eval.guidance) == (20000, 64, 0.1, 7.0)
        assert cfg.extraction().tag == "normmean"

    @pytest.mark.parametrize("text,match", [
        ("[train]\ndrop_prob = 1.5\n", "drop_prob"),
        ("[train]\ndrop_prob = -0.1\n", "drop_prob"),
        ("[bogus]\nx = 1\n", "unknown config sections"),
        ("[train]\nstepz = 3\n", "unknown keys"),
        ("[train]\nsteps = 'many'\n", "integer"),
        ("[strategy]\nvariant = 'single'\nlayer = 9\n", "outside"),
        ("[strategy]\nvariant = 'median'\n", "variant"),
        ("not toml [", "TOML"),
    ])
    def test_validation(self, text, match):
        with pytest.raises(ConfigurationError, match=match):
            RunConfig.loads(text)

    def test_artifact_table_ignored(self):
        cfg = RunConfig()
        assert RunConfig.loads(cfg.dumps() + "\n[artifact]\nkind = 'encoder'\n") == cfg

    def test_protocol_digest_ignores_strategy(self):
        from layercond.extraction import ExtractionStrategy
        a = RunConfig()
        b = a.with_strategy(ExtractionStrategy("last"))
        assert a.digest() != b.digest() and a.protocol_digest() == b.protocol_digest()


class TestCheckpoint:
    @settings(max_examples=30)
    @given(st.dictionaries(st.text(min_size=1, max_size=12),
                           st.lists(st.floats(-1e6, 1e6, width=32), min_size=0, max_size=12), max_size=5),
           st.text(max_size=40))
    def test_bit_exact_round_trip(self, tensors, text):
        arrs = {k: np.array(v, np.float32) for k, v in tensors.items()}
        back = Checkpoint.from_bytes(Checkpoint(text, arrs).to_bytes())
        assert back.config_text == text and back.tensors.keys() == arrs.keys()
        assert all(back.tensors[k].tobytes() == arrs[k].tobytes() for k in arrs)

    def test_corruption_refused(self, tmp_path):
        ck = Checkpoint("x = 1\n", {"w": np.arange(6, dtype=np.float32).reshape(2, 3)})
        buf = bytearray(ck.to_bytes())
        assert bytes(buf[:4]) == b"TXE1"
        for pos in (10, len(buf) // 2, len(buf) - 1):
            bad = bytearray(buf)
            bad[pos] ^= 0x40
            with pytest.raises(IntegrityError):
                Checkpoint.from_bytes(bytes(bad))
        with pytest.raises(IntegrityError):
            Checkpoint.from_bytes(bytes(buf[:-5]))


class TestStreams:
    def test_order_independent(self):
        a = substream(7, "noise").random(4)
        substream(7, "drop").random(100)
        assert np.array_equal(a, substream(7, "noise").random(4))
        assert not np.array_equal(a, substream(7, "drop").random(4))
        assert not np.array_equal(a, substream(8, "noise").random(4))
        assert stream_seed(7, "noise").entropy == stream_seed(7, "noise").entropy


class TestPlots:
    def test_radar_polygons(self):
        svg = radar_svg([("a", {"Attribute": 0.5}), ("b", {"Attribute": 0.2}), ("c", {})])
        assert svg.count('class="series"') == 3 and svg.startswith("<svg")

    def test_line_and_sheet(self):
        assert "<polyline" in line_svg([1, 2, 3], {"avg": [0.1, 0.2, None]})
        assert contact_sheet_svg([("m", [[0.0, 1.0], [0.5, 0.25]])]).count("<rect") >= 4


# --- CLI ----------------------------------------------------------------------

class TestCliErrors:
    def test_missing_corpus_path(self, tmp_path, capsys):
        assert run("train-encoder", "--corpus", tmp_path / "nope.tsv", "--out", tmp_path / "e") == 1
        assert "nope.tsv" in capsys.readouterr().err

    def test_usage_error(self, capsys):
        assert run("evaluate") == 2
        assert run("frobnicate") == 2

    def test_bad_config(self, tmp_path, capsys):
        (tmp_path / "c.toml").write_text("[train]\ndrop_prob = 2.0\n")
        assert run("build-corpus", "--config", tmp_path / "c.toml", "--out", tmp_path / "x") == 2
        assert "drop_prob" in capsys.readouterr().err

    def test_bad_threads(self, work, tmp_path):
        p = paths(work)
        assert run("build-corpus", "--config", p["cfg"], "--threads", 0, "--out", tmp_path / "c") == 2


class TestCorpusAndEncoder:
    def test_corpus_files(self, work):
        lines = (work / "corpus/corpus.tsv").read_text().splitlines()
        assert len(lines) == 24
        assert len((work / "corpus/heldout.txt").read_text().splitlines()) == 8

    def test_corpus_deterministic(self, work, tmp_path):
        assert run("build-corpus", "--config", paths(work)["cfg"], "--out", tmp_path / "c") == 0
        assert (tmp_path / "c/corpus.tsv").read_bytes() == (work / "corpus/corpus.tsv").read_bytes()

    def test_encoder_checkpoint_valid_and_reproducible(self, work, tmp_path):
        p = paths(work)
        Checkpoint.load(p["enc"])  # checksum validates
        assert (work / "enc/loss.csv").read_text().startswith("step,loss\n")
        assert run("train-encoder", "--config", p["cfg"], "--corpus", p["corpus"], "--out", tmp_path / "e") == 0
        assert (tmp_path / "e/encoder.ckpt").read_bytes() == p["enc"].read_bytes()


class TestTrainDiffusion:
    def test_digest_mismatch(self, work, tmp_path, capsys):
        p = paths(work)
        other = tmp_path / "other.toml"
        other.write_text(TINY.replace("steps = 20", "steps = 21"))
        assert run("train-diffusion", "--config", other, "--encoder", p["enc"], "--corpus", p["corpus"],
                   "--out", tmp_path / "d") == 2
        err = capsys.readouterr().err
        assert len(re.findall(r"\b[0-9a-f]{16}\b", err)) == 2

    def test_cache_transparency(self, work, tmp_path):
        p = paths(work)
        assert run("precompute-cache", "--encoder", p["enc"], "--corpus", p["corpus"], "--strategy", "normmean",
                   "--out", tmp_path / "c.emb") == 0
        assert run("train-diffusion", "--config", p["cfg"], "--encoder", p["enc"], "--corpus", p["corpus"],
                   "--cache", tmp_path / "c.emb", "--out", tmp_path / "cached") == 0
        a = (work / "diff/loss.csv").read_text().splitlines()[-1].split(",")[1]
        b = (tmp_path / "cached/loss.csv").read_text().splitlines()[-1].split(",")[1]
        assert abs(float(a) - float(b)) <= 1e-5
        for d, model in (("u", p["model"]), ("c", tmp_path / "cached/model.ckpt")):
            assert run("evaluate", "--model", model, "--prompts", p["prompts"], "--seeds", "1",
                       "--out", tmp_path / d) == 0
        assert (tmp_path / "u/aggregate.csv").read_bytes() == (tmp_path / "c/aggregate.csv").read_bytes()

    def test_cache_strategy_mismatch(self, work, tmp_path):
        p = paths(work)
        assert run("precompute-cache", "--encoder", p["enc"], "--corpus", p["corpus"], "--strategy", "last",
                   "--out", tmp_path / "l.emb") == 0
        assert run("train-diffusion", "--config", p["cfg"], "--encoder", p["enc"], "--corpus", p["corpus"],
                   "--cache", tmp_path / "l.emb", "--out", tmp_path / "x") == 2

    def test_model_checkpoint_round_trip(self, work):
        loaded = load_model(paths(work)["model"])
        ck = Checkpoint.load(paths(work)["model"])
        state = loaded.model.state_dict()
        assert all(ck.tensors["model." + k].tobytes() == v.tobytes() for k, v in state.items())


class TestEvaluate:
    def test_outputs_and_checksum(self, work, tmp_path):
        p = paths(work)
        for d in ("a", "b"):
            assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--out", tmp_path / d) == 0
        out = tmp_path / "a"
        assert sorted(f.name for f in out.glob("seed*_prompts.csv")) == [f"seed{s}_prompts.csv" for s in (1, 2, 3)]
        assert (out / "aggregate.csv").is_file() and (out / "radar.svg").is_file()
        digest = hashlib.sha256((out / "aggregate.csv").read_bytes()).hexdigest()
        assert (out / "aggregate.sha256").read_text().strip() == digest
        assert (tmp_path / "b/aggregate.sha256").read_text() == (out / "aggregate.sha256").read_text()
        assert len((out / "prompts.csv").read_text().splitlines()) == 1 + 8

    def test_guidance_override_recorded(self, work, tmp_path):
        p = paths(work)
        assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--guidance", 3.5, "--seeds", "1",
                   "--out", tmp_path / "g") == 0
        assert "guidance = 3.5\n" in (tmp_path / "g/run.toml").read_text()

    def test_unknown_words(self, work):
        from layercond.bench import realize_caption, loads_prompts
        from layercond.errors import DataError
        from layercond.harness.pipeline import check_vocabulary
        from layercond.text import Vocabulary
        vocab = load_model(paths(work)["model"]).vocab
        small = Vocabulary([w for w in vocab.tokens[5:] if w not in ("red", "blue")])
        caps = [realize_caption(s) for s in loads_prompts(paths(work)["prompts"].read_text())]
        with pytest.raises(DataError, match="blue, red"):
            check_vocabulary(caps + ["one red circle and one blue square"], small)

    def test_save_images(self, work, tmp_path):
        p = paths(work)
        assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--seeds", "1", "--save-images",
                   "--out", tmp_path / "i") == 0
        files = sorted((tmp_path / "i/images_seed1").glob("*.ppm"))
        assert len(files) == 8 and files[0].read_bytes().startswith(b"P6\n32 32\n255\n")


def read_rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


class TestSweeps:
    def test_guidance_sweep(self, work, tmp_path, caplog):
        p = paths(work)
        assert run("sweep-guidance", "--model", p["model"], "--prompts", p["prompts"], "--weights", "1,3,5,7,9",
                   "--seeds", "1", "--sample-steps", 2, "--out", tmp_path / "s") == 0
        rows = read_rows(tmp_path / "s/guidance.csv")
        assert [r["w"] for r in rows] == ["1", "3", "5", "7", "9"]
        assert (tmp_path / "s/guidance.svg").is_file()

    def test_guidance_zero_is_unconditional(self, work, tmp_path):
        p = paths(work)
        assert run("sweep-guidance", "--model", p["model"], "--prompts", p["prompts"], "--weights", "0,2",
                   "--seeds", "1", "--sample-steps", 2, "--out", tmp_path / "s") == 0
        assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--unconditional", "--seeds", "1",
                   "--sample-steps", 2, "--out", tmp_path / "u") == 0
        w0 = read_rows(tmp_path / "s/guidance.csv")[0]
        unc = read_rows(tmp_path / "u/aggregate.csv")[0]
        assert w0["avg"] == unc["avg"]
        assert all(w0[k] == unc[k] for k in w0 if k not in ("w",))

    def test_guidance_dedupe_and_minimum(self, work, tmp_path, caplog):
        p = paths(work)
        with caplog.at_level("WARNING", logger="layercond"):
            assert run("sweep-guidance", "--model", p["model"], "--prompts", p["prompts"], "--weights", "1,1,3",
                       "--seeds", "1", "--sample-steps", 2, "--out", tmp_path / "s") == 0
        assert "duplicate" in caplog.text
        assert len(read_rows(tmp_path / "s/guidance.csv")) == 2
        assert run("sweep-guidance", "--model", p["model"], "--prompts", p["prompts"], "--weights", "4",
                   "--out", tmp_path / "t") == 2

    def test_layer_sweep(self, work, tmp_path):
        p = paths(work)
        assert run("sweep-layers", "--config", p["cfg"], "--encoder", p["enc"], "--corpus", p["corpus"],
                   "--prompts", p["prompts"], "--seeds", "1", "--sample-steps", 2, "--out", tmp_path / "l") == 0
        rows = read_rows(tmp_path / "l/layers.csv")
        assert [r["layer"] for r in rows] == ["0", "2", "3", "4", "last"]
        k4, last = rows[3], rows[4]
        assert all(k4[c] == last[c] for c in k4 if c not in ("label", "layer"))

    def test_layer_out_of_range(self, work, tmp_path):
        p = paths(work)
        assert run("sweep-layers", "--config", p["cfg"], "--encoder", p["enc"], "--corpus", p["corpus"],
                   "--prompts", p["prompts"], "--layers", "0,5", "--out", tmp_path / "l") == 2

    def test_compare_strategies(self, work, tmp_path):
        p = paths(work)
        assert run("compare-strategies", "--config", p["cfg"], "--encoder", p["enc"], "--corpus", p["corpus"],
                   "--prompts", p["prompts"], "--seeds", "1", "--pooled", "meanpool", "--sample-steps", 2, "--out", tmp_path / "c") == 0
        rows = read_rows(tmp_path / "c/compare.csv")
        assert [r["label"] for r in rows] == ["last", "mean", "normmean", "last+meanpool", "mean+meanpool",
                                              "normmean+meanpool"]
        assert [r["pooled"] for r in rows] == ["none"] * 3 + ["meanpool"] * 3
        assert all(r[c] != "" or c in ("label",) for r in rows for c in ("avg", "attribute"))
        assert len(read_rows(tmp_path / "c/differences.csv")) == 8
        # per-run directories feed the report command: six strategies, six polygons
        dirs = [tmp_path / "c" / r["label"] for r in rows]
        assert run("report", *dirs, "--out", tmp_path / "r") == 0
        assert (tmp_path / "r/radar.svg").read_text().count('class="series"') == 6
        assert "protocol" not in (tmp_path / "r/summary.md").read_text()


class TestHeatmapAndReport:
    def test_heatmap(self, work, tmp_path, capsys):
        p = paths(work)
        cap = "one red circle and two small blue squares"
        for d in ("h1", "h2"):
            assert run("heatmap", "--model", p["model"], "--caption", cap, "--token", "circle", "--timesteps", "999,0",
                       "--seed", 4, "--out", tmp_path / d) == 0
        maps = sorted((tmp_path / "h1").glob("*.pgm"))
        n_sites = len(load_model(p["model"]).model.unet.attention_sites())
        assert len(maps) == 2 * n_sites
        for m in maps:
            assert m.read_bytes().startswith(b"P5\n32 32\n255\n")
            assert m.read_bytes() == (tmp_path / "h2" / m.name).read_bytes()
        assert (tmp_path / "h1/contact.svg").is_file()
        assert run("heatmap", "--model", p["model"], "--caption", cap, "--token", "triangle",
                   "--out", tmp_path / "h3") == 1
        assert "available tokens: one, red, circle" in capsys.readouterr().err

    def test_report_single_and_mismatch(self, work, tmp_path):
        p = paths(work)
        assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--seeds", "1", "--out", tmp_path / "a") == 0
        assert run("report", tmp_path / "a", "--out", tmp_path / "r") == 0
        assert (tmp_path / "r/summary.csv").read_bytes() == (tmp_path / "a/aggregate.csv").read_bytes()
        other = tmp_path / "other.txt"
        other.write_text("\n".join(p["prompts"].read_text().splitlines()[:4]) + "\n")
        assert run("evaluate", "--model", p["model"], "--prompts", other, "--seeds", "1", "--out", tmp_path / "b") == 0
        assert run("report", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "r2") == 1
        assert run("report", tmp_path / "missing", "--out", tmp_path / "r3") == 1

    def test_report_flags_protocol_mismatch(self, work, tmp_path):
        p = paths(work)
        assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--seeds", "1", "--out", tmp_path / "a") == 0
        assert run("evaluate", "--model", p["model"], "--prompts", p["prompts"], "--seeds", "2", "--out", tmp_path / "b") == 0
        assert run("report", tmp_path / "a", tmp_path / "b", "--out", tmp_path / "r") == 0
        assert "digests differ" in (tmp_path / "r/summary.md").read_text()
