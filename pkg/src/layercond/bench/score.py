"""Compile a spec to atomic predicates and score images by the satisfied fraction."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .detect import Detection, detect_objects
from .render import IMAGE_SIZE
from .spec import PromptSpec

COMPARISON_AREA_RATIO = 1.5


@dataclass(frozen=True)
class Predicate:
    name: str
    test: Callable[[list[Detection], str], bool]


def _in_quadrant(det: Detection, quad: str) -> bool:
    x, y = det.centroid
    half = (IMAGE_SIZE - 1) / 2.0
    return {"left": x < half, "right": x > half, "top": y < half, "bottom": y > half}[quad]


def _relation_holds(a: Detection, b: Detection, rel: str) -> bool:
    (ax, ay), (bx, by) = a.centroid, b.centroid
    return {"left-of": ax < bx, "right-of": ax > bx, "above": ay < by, "below": ay > by}[rel]


def compile_predicates(spec: PromptSpec) -> list[Predicate]:
    preds: list[Predicate] = []
    for k, o in enumerate(spec.objects):
        def matching(dets, o=o):
            return [d for d in dets if o.matches(d.shape, d.color, d.size)]

        preds.append(Predicate(f"count[{k}]={o.count}", lambda dets, bg, m=matching, n=o.count: len(m(dets)) == n))
        if o.quadrant:
            preds.append(Predicate(f"quadrant[{k}]={o.quadrant}",
                                   lambda dets, bg, m=matching, q=o.quadrant:
                                   bool(m(dets)) and all(_in_quadrant(d, q) for d in m(dets))))
    for r in spec.relations:
        a, b = spec.objects[r.a], spec.objects[r.b]

        def rel_ok(dets, bg, a=a, b=b, rel=r.rel):
            da = [d for d in dets if a.matches(d.shape, d.color, d.size)]
            db = [d for d in dets if b.matches(d.shape, d.color, d.size)]
            return any(_relation_holds(x, y, rel) for x in da for y in db)

        preds.append(Predicate(f"relation[{r.a} {r.rel} {r.b}]", rel_ok))
    for u in spec.universals:
        preds.append(Predicate(f"all[{u.shape}]={u.color}", lambda dets, bg, u=u: (
            any(d.shape == u.shape for d in dets) and all(d.color == u.color for d in dets if d.shape == u.shape))))
    for c in spec.comparisons:
        def largest_and_rest(dets, shape=c.shape):
            group = sorted((d for d in dets if d.shape == shape), key=lambda d: -d.area)
            return (group[0], group[1:]) if group else (None, [])

        preds.append(Predicate(f"largest[{c.shape}]={c.largest}", lambda dets, bg, f=largest_and_rest, col=c.largest:
                               f(dets)[0] is not None and f(dets)[0].color == col))
        preds.append(Predicate(f"others[{c.shape}]={c.others}", lambda dets, bg, f=largest_and_rest, col=c.others:
                               f(dets)[0] is not None and all(d.color == col for d in f(dets)[1])))
        preds.append(Predicate(f"larger[{c.shape}]", lambda dets, bg, f=largest_and_rest: (
            f(dets)[0] is not None and bool(f(dets)[1])
            and all(f(dets)[0].area >= COMPARISON_AREA_RATIO * d.area for d in f(dets)[1]))))
    for n in spec.negations:
        preds.append(Predicate(f"absent[{n.shape},{n.color or '*'}]", lambda dets, bg, n=n: not any(
            d.shape == n.shape and (n.color is None or d.color == n.color) for d in dets)))
    if spec.background is not None:
        preds.append(Predicate(f"background={spec.background}", lambda dets, bg, want=spec.background: bg == want))
    return preds


def score_detections(dets: list[Detection], background: str, spec: PromptSpec) -> float:
    preds = compile_predicates(spec)
    return sum(p.test(dets, background) for p in preds) / len(preds)


def score(image: np.ndarray, spec: PromptSpec) -> float:
    dets, bg = detect_objects(image)
    return score_detections(dets, bg, spec)
