"""Caption templates and the skill-driven prompt sampler."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..errors import ContractError
from .spec import (
    ATTRIBUTE, COLORS, COMPARISON, COUNTING, DIFFERENTIATION, NEGATION, NEUTRALS, QUADRANTS, RELATIONS,
    SCENE, SHAPES, SIZES, SKILLS, SPATIAL, UNIVERSALITY, Comparison, Negation, ObjectClause, PromptSpec,
    Relation, Universal, validate,
)

NUMBERS = {1: "one", 2: "two", 3: "three", 4: "four"}
PLURAL = {s: s + "s" for s in SHAPES}
QUADRANT_PHRASE = {"left": "on the left", "right": "on the right", "top": "at the top", "bottom": "at the bottom"}
RELATION_PHRASE = {"left-of": "left of", "right-of": "right of", "above": "above", "below": "below"}
MAX_CAPTION_WORDS = 30


def caption_words() -> list[str]:
    """Every word a realized caption can contain, in a fixed order."""
    words = list(NUMBERS.values()) + list(SIZES) + list(COLORS) + list(NEUTRALS)
    words += [w for s in SHAPES for w in (s, PLURAL[s])]
    phrases = list(QUADRANT_PHRASE.values()) + list(RELATION_PHRASE.values())
    phrases += ["and", "all are", "the largest is the others are", "no", "on a background"]
    for p in phrases:
        words += p.split()
    return list(dict.fromkeys(words))


def canonical(spec: PromptSpec) -> PromptSpec:
    """Sort clauses so that specs differing only in clause order coincide."""
    order = sorted(range(len(spec.objects)), key=lambda i: _clause_key(spec.objects[i]))
    where = {old: new for new, old in enumerate(order)}
    rels = []
    for r in spec.relations:
        a, b = where[r.a], where[r.b]
        rels.append(Relation(a, r.rel, b))
    return PromptSpec(tuple(spec.objects[i] for i in order), tuple(sorted(rels)), tuple(sorted(spec.negations, key=_neg_key)),
                      tuple(sorted(spec.universals)), tuple(sorted(spec.comparisons)), spec.background)


def _clause_key(o: ObjectClause):
    return (o.shape, o.color or "", o.size or "", o.count, o.quadrant or "")


def _neg_key(n: Negation):
    return (n.shape, n.color or "")


def _object_phrase(o: ObjectClause) -> str:
    words = [NUMBERS[o.count]]
    if o.size:
        words.append(o.size)
    if o.color:
        words.append(o.color)
    words.append(PLURAL[o.shape] if o.count > 1 else o.shape)
    if o.quadrant:
        words.append(QUADRANT_PHRASE[o.quadrant])
    return " ".join(words)


def realize_caption(spec: PromptSpec) -> str:
    spec = canonical(spec)
    rel_of = {r.a: r for r in spec.relations}
    second = {r.b for r in spec.relations}
    clauses = []
    for i, o in enumerate(spec.objects):
        if i in second:
            continue
        phrase = _object_phrase(o)
        if i in rel_of:
            r = rel_of[i]
            phrase += f" {RELATION_PHRASE[r.rel]} {_object_phrase(spec.objects[r.b])}"
        clauses.append(phrase)
    clauses += [f"all {PLURAL[u.shape]} are {u.color}" for u in spec.universals]
    clauses += [f"the largest {c.shape} is {c.largest} and the others are {c.others}" for c in spec.comparisons]
    clauses += [f"no {n.color + ' ' if n.color else ''}{PLURAL[n.shape]}" for n in spec.negations]
    text = " and ".join(clauses)
    if spec.background is not None:
        text += f" on a {spec.background} background"
    return text


# --- sampling ---------------------------------------------------------------

def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _core(rng, skill: str, shapes: list[str]) -> dict:
    """Minimal structure exhibiting one skill; shapes are consumed from ``shapes``."""
    parts = {"objects": [], "relations": [], "negations": [], "universals": [], "comparisons": [], "background": None}
    objs = parts["objects"]
    size = lambda: _pick(rng, SIZES + (None,))  # noqa: E731
    if skill == ATTRIBUTE:
        for _ in range(int(rng.integers(1, 3))):
            objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), size(), 1))
    elif skill == SCENE:
        parts["background"] = _pick(rng, NEUTRALS)
        objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), size(), int(rng.integers(1, 3))))
    elif skill == SPATIAL:
        if rng.random() < 0.5:
            objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), size(), int(rng.integers(1, 3)),
                                     _pick(rng, QUADRANTS)))
        else:
            objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), size(), 1))
            objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), size(), 1))
            parts["relations"].append(Relation(0, _pick(rng, RELATIONS), 1))
    elif skill == COUNTING:
        objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), _pick(rng, SIZES + (None, "small")),
                                 int(rng.integers(2, 5))))
    elif skill == COMPARISON:
        s = shapes.pop()
        big, other = rng.choice(len(COLORS), size=2, replace=False)
        objs.append(ObjectClause(s, None, None, int(rng.integers(2, 5))))
        parts["comparisons"].append(Comparison(s, COLORS[big], COLORS[other]))
    elif skill == DIFFERENTIATION:
        s = shapes.pop()
        c1, c2 = rng.choice(len(COLORS), size=2, replace=False)
        z1 = _pick(rng, SIZES)
        if rng.random() < 0.5:
            a, b = (COLORS[c1], z1), (COLORS[c2], z1)
        else:
            a, b = (COLORS[c1], "small"), (COLORS[c1], "large")
        objs.append(ObjectClause(s, a[0], a[1], int(rng.integers(1, 3))))
        objs.append(ObjectClause(s, b[0], b[1], int(rng.integers(1, 3))))
    elif skill == NEGATION:
        objs.append(ObjectClause(shapes.pop(), _pick(rng, COLORS), size(), int(rng.integers(1, 3))))
        neg_shape = shapes.pop()
        parts["negations"].append(Negation(neg_shape, _pick(rng, COLORS) if rng.random() < 0.3 else None))
    elif skill == UNIVERSALITY:
        s = shapes.pop()
        objs.append(ObjectClause(s, None, _pick(rng, ("small", None)), int(rng.integers(2, 5))))
        parts["universals"].append(Universal(s, _pick(rng, COLORS)))
    else:
        raise ContractError(f"unknown skill {skill!r}")
    return parts


def _decorate(rng, parts: dict, shapes: list[str]) -> None:
    if shapes and rng.random() < 0.4:
        parts["objects"].append(ObjectClause(shapes.pop(), _pick(rng, COLORS), _pick(rng, SIZES + (None,)),
                                             int(rng.integers(1, 3))))
    if shapes and not parts["negations"] and rng.random() < 0.15:
        parts["negations"].append(Negation(shapes.pop(), None))
    if parts["background"] is None and rng.random() < 0.15:
        parts["background"] = _pick(rng, NEUTRALS)


def sample_prompt(rng: np.random.Generator, skill_mix: dict[str, float] | None = None,
                  max_tries: int = 200) -> PromptSpec:
    from .render import placeable

    mix = skill_mix or {s: 1.0 for s in SKILLS}
    names = [k for k in SKILLS if k in mix]
    unknown = set(mix) - set(SKILLS)
    if unknown:
        raise ContractError(f"unknown skills in mix: {sorted(unknown)}")
    weights = np.array([mix[k] for k in names], dtype=float)
    if (weights < 0).any() or weights.sum() <= 0:
        raise ContractError("skill mix weights must be nonnegative and not all zero")
    weights /= weights.sum()
    for _ in range(max_tries):
        skill = names[int(rng.choice(len(names), p=weights))]
        shapes = [SHAPES[i] for i in rng.permutation(len(SHAPES))]
        parts = _core(rng, skill, shapes)
        _decorate(rng, parts, shapes)
        spec = PromptSpec(tuple(parts["objects"]), tuple(parts["relations"]), tuple(parts["negations"]),
                          tuple(parts["universals"]), tuple(parts["comparisons"]), parts["background"])
        try:
            validate(spec)
        except ContractError:
            continue
        if skill not in spec.tags or len(realize_caption(spec).split()) > MAX_CAPTION_WORDS:
            continue
        if not placeable(spec):
            continue
        return canonical(spec)
    raise ContractError("could not sample a valid prompt")  # pragma: no cover


def with_background(spec: PromptSpec, background: str | None) -> PromptSpec:
    return replace(spec, background=background)
