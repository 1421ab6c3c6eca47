"""Training pairs and the held-out benchmark prompt set."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, DataError
from .grammar import realize_caption, sample_prompt
from .render import IMAGE_SIZE, render_reference
from .spec import SKILLS, PromptSpec, from_sexpr, to_sexpr, validate

HELDOUT_PROMPTS = 400


@dataclass
class Corpus:
    captions: list[str]
    specs: list[PromptSpec]
    images: np.ndarray  # (N, 32, 32, 3) uint8
    heldout: list[PromptSpec] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.captions)


def sample_heldout(rng: np.random.Generator, n: int = HELDOUT_PROMPTS) -> list[PromptSpec]:
    """Skill-stratified prompts with distinct captions; each skill leads n/8 of them."""
    specs, seen = [], set()
    for i in range(n):
        skill = SKILLS[i % len(SKILLS)]
        while True:
            spec = sample_prompt(rng, {skill: 1.0})
            cap = realize_caption(spec)
            if cap not in seen:
                seen.add(cap)
                specs.append(spec)
                break
    return specs


def build_corpus(n_pairs: int, rng: np.random.Generator, n_heldout: int = HELDOUT_PROMPTS,
                 skill_mix: dict[str, float] | None = None) -> Corpus:
    if n_pairs < 1:
        raise ContractError(f"need at least one pair, got {n_pairs}")
    heldout = sample_heldout(rng, n_heldout) if n_heldout else []
    banned = {realize_caption(s) for s in heldout}
    captions, specs = [], []
    images = np.zeros((n_pairs, IMAGE_SIZE, IMAGE_SIZE, 3), np.uint8)
    while len(captions) < n_pairs:
        spec = sample_prompt(rng, skill_mix)
        cap = realize_caption(spec)
        if cap in banned:
            continue
        images[len(captions)] = render_reference(spec, rng)
        captions.append(cap)
        specs.append(spec)
    return Corpus(captions, specs, images, heldout)


# --- files ------------------------------------------------------------------

def dumps_corpus(corpus: Corpus) -> str:
    """One tab-separated record per pair: caption, spec, inline hex of the raw RGB bytes."""
    lines = [f"{c}\t{to_sexpr(s)}\t{img.tobytes().hex()}" for c, s, img in zip(corpus.captions, corpus.specs,
                                                                              corpus.images)]
    return "\n".join(lines) + ("\n" if lines else "")


def loads_corpus(text: str, heldout: list[PromptSpec] | None = None) -> Corpus:
    captions, specs, images = [], [], []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"corpus line {n}: expected 3 tab-separated fields, got {len(parts)}")
        raw = bytes.fromhex(parts[2])
        if len(raw) != IMAGE_SIZE * IMAGE_SIZE * 3:
            raise DataError(f"corpus line {n}: image payload has {len(raw)} bytes")
        captions.append(parts[0])
        specs.append(from_sexpr(parts[1]))
        images.append(np.frombuffer(raw, np.uint8).reshape(IMAGE_SIZE, IMAGE_SIZE, 3))
    arr = np.stack(images) if images else np.zeros((0, IMAGE_SIZE, IMAGE_SIZE, 3), np.uint8)
    return Corpus(captions, specs, arr, heldout or [])


def dumps_prompts(specs: list[PromptSpec]) -> str:
    return "".join(to_sexpr(s) + "\n" for s in specs)


def loads_prompts(text: str) -> list[PromptSpec]:
    specs = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith(";"):
            continue
        spec = from_sexpr(line)
        try:
            validate(spec)
        except ContractError as exc:
            raise DataError(f"prompt line {n}: {exc}") from None
        specs.append(spec)
    return specs
