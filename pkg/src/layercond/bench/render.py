"""Reference renderer: crisp shapes on a flat background, no anti-aliasing."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import ContractError
from .spec import PromptSpec, validate

IMAGE_SIZE = 32
SIZE_PX = {"small": 6, "large": 10}
GAP = 1  # free pixels kept around every object
RELATION_MARGIN = 2
PALETTE = {
    "black": (0, 0, 0), "white": (255, 255, 255), "gray": (128, 128, 128),
    "red": (255, 0, 0), "green": (0, 255, 0), "blue": (0, 0, 255), "yellow": (255, 255, 0),
}
_SEARCH_BUDGET = 20000


@lru_cache(maxsize=None)
def shape_mask(shape: str, size: str) -> np.ndarray:
    d = SIZE_PX[size]
    yy, xx = np.mgrid[0:d, 0:d] + 0.5
    c = d / 2.0
    if shape == "square":
        m = np.ones((d, d), bool)
    elif shape == "circle":
        m = (xx - c) ** 2 + (yy - c) ** 2 <= (c - 0.25) ** 2
    elif shape == "triangle":
        # apex up; half-width grows linearly to the full base on the last row
        m = np.abs(xx - c) <= c * (yy + 0.5) / d
    else:
        raise ContractError(f"unknown shape {shape!r}")
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class PlacedObject:
    clause: int
    shape: str
    color: str
    size: str
    x: int  # top-left corner
    y: int

    @property
    def extent(self) -> int:
        return SIZE_PX[self.size]

    @property
    def center(self) -> tuple[float, float]:
        mask = shape_mask(self.shape, self.size)
        ys, xs = np.nonzero(mask)
        return self.x + xs.mean(), self.y + ys.mean()


@dataclass
class Scene:
    image: np.ndarray  # (32, 32, 3) uint8
    objects: list[PlacedObject]
    background: str


def _instances(spec: PromptSpec, rng: np.random.Generator | None):
    """(clause, shape, colour, size) per object; unstated sizes are drawn from rng (large when rng is None)."""
    out = []
    for k, o in enumerate(spec.objects):
        comp, univ = spec.comparison_for(o.shape), spec.universal_for(o.shape)
        for j in range(o.count):
            if comp is not None:
                color, size = (comp.largest, "large") if j == 0 else (comp.others, "small")
            else:
                color = o.color if o.color is not None else univ.color
                if o.size is not None:
                    size = o.size
                else:
                    size = "large" if rng is None else ("small", "large")[int(rng.integers(2))]
            out.append((k, o.shape, color, size))
    return out


def _free_positions(occ: np.ndarray, d: int) -> np.ndarray:
    """Boolean (n, n) grid of top-left corners whose padded box avoids ``occ``."""
    n = IMAGE_SIZE - d + 1
    padded = np.pad(occ, GAP).astype(np.int32)
    ii = np.zeros((padded.shape[0] + 1, padded.shape[1] + 1), np.int32)
    ii[1:, 1:] = padded.cumsum(0).cumsum(1)
    w = d + 2 * GAP
    # padded coords: object box at (y, x) spans padded rows y .. y + d + 2*GAP - 1
    s = ii[w:w + n, w:w + n] - ii[0:n, w:w + n] - ii[w:w + n, 0:n] + ii[0:n, 0:n]
    return s == 0


def _quadrant_ok(quad, x, y, d):
    half = IMAGE_SIZE // 2
    if quad is None:
        return np.ones(np.shape(x), bool)
    if quad == "left":
        return x + d <= half
    if quad == "right":
        return x >= half
    if quad == "top":
        return y + d <= half
    return y >= half


def _relation_ok(rel, a_center, b_center):
    (ax, ay), (bx, by) = a_center, b_center
    if rel == "left-of":
        return ax + RELATION_MARGIN <= bx
    if rel == "right-of":
        return ax >= bx + RELATION_MARGIN
    if rel == "above":
        return ay + RELATION_MARGIN <= by
    return ay >= by + RELATION_MARGIN


def _place(spec: PromptSpec, instances, rng) -> list[PlacedObject] | None:
    # relation endpoints go first so a failed relation backtracks without re-placing bystanders
    linked = {k for r in spec.relations for k in (r.a, r.b)}
    order = sorted(range(len(instances)), key=lambda i: (instances[i][0] not in linked, -SIZE_PX[instances[i][3]]))
    rel_by_clause = {}
    for r in spec.relations:
        rel_by_clause.setdefault(r.a, []).append(r)
        rel_by_clause.setdefault(r.b, []).append(r)
    placed: dict[int, PlacedObject] = {}
    by_clause: dict[int, PlacedObject] = {}
    occ = np.zeros((IMAGE_SIZE, IMAGE_SIZE), bool)
    budget = [_SEARCH_BUDGET]

    def candidates(inst):
        k, shape, color, size = inst
        d = SIZE_PX[size]
        ys, xs = np.nonzero(_free_positions(occ, d))
        keep = _quadrant_ok(spec.objects[k].quadrant, xs, ys, d)
        mys, mxs = np.nonzero(shape_mask(shape, size))
        cx, cy = xs + mxs.mean(), ys + mys.mean()
        for r in rel_by_clause.get(k, ()):
            other = by_clause.get(r.b if r.a == k else r.a)
            if other is not None:
                a, b = ((cx, cy), other.center) if r.a == k else (other.center, (cx, cy))
                keep = keep & _relation_ok(r.rel, a, b)
        idx = np.flatnonzero(keep)
        for p in rng.permutation(idx):
            yield PlacedObject(k, shape, color, size, int(xs[p]), int(ys[p]))

    def dfs(depth):
        if depth == len(order):
            return True
        i = order[depth]
        for obj in candidates(instances[i]):
            budget[0] -= 1
            if budget[0] < 0:
                return False
            d = obj.extent
            occ[obj.y:obj.y + d, obj.x:obj.x + d] |= shape_mask(obj.shape, obj.size)
            placed[i] = obj
            by_clause[obj.clause] = obj
            if dfs(depth + 1):
                return True
            occ[obj.y:obj.y + d, obj.x:obj.x + d] &= ~shape_mask(obj.shape, obj.size)
            del placed[i]
            by_clause.pop(obj.clause, None)
        return False

    if not dfs(0):
        return None
    return [placed[i] for i in range(len(instances))]


def paint(objects, background: str) -> np.ndarray:
    img = np.empty((IMAGE_SIZE, IMAGE_SIZE, 3), np.uint8)
    img[:] = PALETTE[background]
    for obj in objects:
        d = obj.extent
        region = img[obj.y:obj.y + d, obj.x:obj.x + d]
        region[shape_mask(obj.shape, obj.size)] = PALETTE[obj.color]
    return img


def render_scene(spec: PromptSpec, rng: np.random.Generator) -> Scene:
    validate(spec)
    objects = None
    for _ in range(4):
        objects = _place(spec, _instances(spec, rng), rng)
        if objects is not None:
            break
    if objects is None:
        # the all-large layout is what placeable() vouches for
        objects = _place(spec, _instances(spec, None), rng)
    if objects is None:
        raise ContractError(f"cannot place the objects of {spec}")
    return Scene(paint(objects, spec.render_background), objects, spec.render_background)


def render_reference(spec: PromptSpec, rng: np.random.Generator) -> np.ndarray:
    return render_scene(spec, rng).image


def placeable(spec: PromptSpec) -> bool:
    """True when the worst case (every unstated size large) can be laid out."""
    return _place(spec, _instances(spec, None), np.random.default_rng(0)) is not None
