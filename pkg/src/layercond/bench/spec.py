"""Structured scene descriptions and their derived skill tags.

A spec line in the prompt file looks like::

    (scene (bg gray) (obj circle red small 2 left) (obj square * large 1 -)
           (rel 0 left-of 1) (neg triangle *) (all circle green) (cmp square red yellow))

``*`` marks an unstated attribute and ``-`` an absent quadrant.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import ContractError, DataError

SHAPES = ("circle", "square", "triangle")
COLORS = ("red", "green", "blue", "yellow")
NEUTRALS = ("black", "white", "gray")
BACKGROUNDS = NEUTRALS + COLORS
SIZES = ("small", "large")
QUADRANTS = ("left", "right", "top", "bottom")
RELATIONS = ("left-of", "right-of", "above", "below")
MAX_OBJECTS = 6
MAX_LARGE = 3
MAX_COUNT = 4
DEFAULT_BACKGROUND = "black"

ATTRIBUTE, SCENE, SPATIAL, COUNTING = "Attribute", "Scene", "Spatial", "Counting"
COMPARISON, DIFFERENTIATION, NEGATION, UNIVERSALITY = "Comparison", "Differentiation", "Negation", "Universality"
# column order of the aggregate report
SKILLS = (ATTRIBUTE, SCENE, SPATIAL, COUNTING, COMPARISON, DIFFERENTIATION, NEGATION, UNIVERSALITY)


@dataclass(frozen=True, order=True)
class ObjectClause:
    shape: str
    color: str | None = None
    size: str | None = None
    count: int = 1
    quadrant: str | None = None

    def matches(self, shape: str, color: str, size: str) -> bool:
        return (shape == self.shape and (self.color is None or color == self.color)
                and (self.size is None or size == self.size))


@dataclass(frozen=True, order=True)
class Relation:
    a: int
    rel: str
    b: int


@dataclass(frozen=True, order=True)
class Negation:
    shape: str
    color: str | None = None


@dataclass(frozen=True, order=True)
class Universal:
    shape: str
    color: str


@dataclass(frozen=True, order=True)
class Comparison:
    shape: str
    largest: str
    others: str


@dataclass(frozen=True)
class PromptSpec:
    objects: tuple[ObjectClause, ...]
    relations: tuple[Relation, ...] = ()
    negations: tuple[Negation, ...] = ()
    universals: tuple[Universal, ...] = ()
    comparisons: tuple[Comparison, ...] = ()
    background: str | None = None  # None: unstated, rendered with the default

    @property
    def render_background(self) -> str:
        return self.background or DEFAULT_BACKGROUND

    @property
    def total_objects(self) -> int:
        return sum(o.count for o in self.objects)

    def universal_for(self, shape: str) -> Universal | None:
        return next((u for u in self.universals if u.shape == shape), None)

    def comparison_for(self, shape: str) -> Comparison | None:
        return next((c for c in self.comparisons if c.shape == shape), None)

    def differentiation_pairs(self) -> list[tuple[int, int]]:
        pairs = []
        for i, a in enumerate(self.objects):
            for j in range(i + 1, len(self.objects)):
                b = self.objects[j]
                if a.shape != b.shape or None in (a.color, a.size, b.color, b.size):
                    continue
                if (a.color != b.color) + (a.size != b.size) == 1:
                    pairs.append((i, j))
        return pairs

    @property
    def tags(self) -> frozenset[str]:
        tags = set()
        if any(o.color is not None for o in self.objects):
            tags.add(ATTRIBUTE)
        if self.background is not None:
            tags.add(SCENE)
        if self.relations or any(o.quadrant for o in self.objects):
            tags.add(SPATIAL)
        if any(o.count > 1 for o in self.objects):
            tags.add(COUNTING)
        if self.comparisons:
            tags.add(COMPARISON)
        if self.differentiation_pairs():
            tags.add(DIFFERENTIATION)
        if self.negations:
            tags.add(NEGATION)
        if self.universals:
            tags.add(UNIVERSALITY)
        return frozenset(tags)

    def object_colors(self, clause: ObjectClause) -> set[str]:
        """Colours a clause's objects can take in a faithful render."""
        if clause.color is not None:
            return {clause.color}
        u, c = self.universal_for(clause.shape), self.comparison_for(clause.shape)
        if u is not None:
            return {u.color}
        if c is not None:
            return {c.largest, c.others}
        return set(COLORS)


def validate(spec: PromptSpec) -> None:
    """Raise ContractError unless the spec is renderable and internally consistent."""
    objs = spec.objects
    if not objs:
        raise ContractError("spec needs at least one positive clause")
    if spec.background is not None and spec.background not in BACKGROUNDS:
        raise ContractError(f"unknown background {spec.background!r}")
    for o in objs:
        if o.shape not in SHAPES or (o.color is not None and o.color not in COLORS):
            raise ContractError(f"bad clause {o}")
        if (o.size is not None and o.size not in SIZES) or (o.quadrant is not None and o.quadrant not in QUADRANTS):
            raise ContractError(f"bad clause {o}")
        if not 1 <= o.count <= MAX_COUNT:
            raise ContractError(f"count {o.count} outside 1..{MAX_COUNT}")
    if spec.total_objects > MAX_OBJECTS:
        raise ContractError(f"{spec.total_objects} objects exceed the limit of {MAX_OBJECTS}")

    grouped = {u.shape for u in spec.universals} | {c.shape for c in spec.comparisons}
    if len(spec.universals) != len({u.shape for u in spec.universals}):
        raise ContractError("one universal clause per shape")
    if len(spec.comparisons) != len({c.shape for c in spec.comparisons}):
        raise ContractError("one comparison clause per shape")
    if {u.shape for u in spec.universals} & {c.shape for c in spec.comparisons}:
        raise ContractError("a shape cannot carry both a universal and a comparison clause")
    for shape in grouped:
        members = [o for o in objs if o.shape == shape]
        if len(members) != 1 or members[0].color is not None:
            raise ContractError(f"{shape}: universal/comparison needs exactly one colour-free clause of that shape")
    for c in spec.comparisons:
        o = next(o for o in objs if o.shape == c.shape)
        if o.size is not None or o.count < 2 or c.largest == c.others:
            raise ContractError(f"comparison on {c.shape} needs >= 2 size-free objects and two colours")
        if c.largest not in COLORS or c.others not in COLORS:
            raise ContractError(f"bad comparison colours {c}")
    for u in spec.universals:
        if u.color not in COLORS:
            raise ContractError(f"bad universal colour {u}")
    for o in objs:
        if o.color is None and o.shape not in grouped:
            raise ContractError(f"colour-free clause {o} needs a universal or comparison clause")

    # clauses must describe disjoint object sets, so counts are unambiguous
    for i, a in enumerate(objs):
        for b in objs[i + 1:]:
            if a.shape != b.shape:
                continue
            if a.color == b.color and (a.size is None or b.size is None or a.size == b.size):
                raise ContractError(f"clauses {a} and {b} overlap")

    large = 0
    for o in objs:
        if o.size == "large":
            large += o.count
        elif o.size is None:
            large += 1 if spec.comparison_for(o.shape) else o.count
    if large > MAX_LARGE:
        raise ContractError(f"{large} large objects exceed the limit of {MAX_LARGE}")

    endpoints = [k for r in spec.relations for k in (r.a, r.b)]
    if len(endpoints) != len(set(endpoints)):
        raise ContractError("an object clause can take part in at most one relation")
    for r in spec.relations:
        if r.rel not in RELATIONS or not (0 <= r.a < len(objs) and 0 <= r.b < len(objs)) or r.a == r.b:
            raise ContractError(f"bad relation {r}")
        for k in (r.a, r.b):
            o = objs[k]
            if o.count != 1 or o.color is None or o.quadrant is not None:
                raise ContractError(f"relation endpoints must be single, coloured, quadrant-free objects: {o}")

    bg = spec.render_background
    for o in objs:
        if bg in spec.object_colors(o):
            raise ContractError(f"background {bg} hides {o}")
    for n in spec.negations:
        if n.shape not in SHAPES or (n.color is not None and n.color not in COLORS):
            raise ContractError(f"bad negation {n}")
        for o in objs:
            if o.shape == n.shape and (n.color is None or n.color in spec.object_colors(o)):
                raise ContractError(f"negated {n} also appears positively as {o}")


# --- s-expression text form -------------------------------------------------

def _a(x):
    return "*" if x is None else str(x)


def to_sexpr(spec: PromptSpec) -> str:
    parts = ["(scene"]
    if spec.background is not None:
        parts.append(f"(bg {spec.background})")
    for o in spec.objects:
        parts.append(f"(obj {o.shape} {_a(o.color)} {_a(o.size)} {o.count} {o.quadrant or '-'})")
    parts += [f"(rel {r.a} {r.rel} {r.b})" for r in spec.relations]
    parts += [f"(neg {n.shape} {_a(n.color)})" for n in spec.negations]
    parts += [f"(all {u.shape} {u.color})" for u in spec.universals]
    parts += [f"(cmp {c.shape} {c.largest} {c.others})" for c in spec.comparisons]
    return " ".join(parts) + ")"


_ITEM = re.compile(r"\(([a-z]+)((?: [^()\s]+)*)\)")


def from_sexpr(text: str) -> PromptSpec:
    text = text.strip()
    if not (text.startswith("(scene") and text.endswith(")")):
        raise DataError(f"not a scene expression: {text[:40]!r}")
    body = text[len("(scene"):-1]
    fields: dict[str, list] = {"obj": [], "rel": [], "neg": [], "all": [], "cmp": []}
    background = None
    consumed = 0
    for m in _ITEM.finditer(body):
        if body[consumed:m.start()].strip():
            raise DataError(f"unparseable scene text near {body[consumed:m.start()]!r}")
        consumed = m.end()
        head, args = m.group(1), m.group(2).split()
        val = [None if a == "*" else a for a in args]
        try:
            if head == "bg":
                (background,) = val
            elif head == "obj":
                shape, color, size, count, quad = val
                fields["obj"].append(ObjectClause(shape, color, size, int(count), None if quad == "-" else quad))
            elif head == "rel":
                a, rel, b = val
                fields["rel"].append(Relation(int(a), rel, int(b)))
            elif head == "neg":
                fields["neg"].append(Negation(*val))
            elif head == "all":
                fields["all"].append(Universal(*val))
            elif head == "cmp":
                fields["cmp"].append(Comparison(*val))
            else:
                raise DataError(f"unknown scene item {head!r}")
        except (TypeError, ValueError) as exc:
            raise DataError(f"malformed ({head} ...) item: {m.group(0)}") from exc
    if body[consumed:].strip():
        raise DataError(f"unparseable scene text near {body[consumed:]!r}")
    return PromptSpec(tuple(fields["obj"]), tuple(fields["rel"]), tuple(fields["neg"]), tuple(fields["all"]),
                      tuple(fields["cmp"]), background)
