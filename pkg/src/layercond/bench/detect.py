"""Closed-world object detector used by the alignment oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .render import PALETTE
from .spec import COLORS

MIN_COMPONENT = 4
LARGE_EXTENT = 8       # bounding-box side separating small from large
TRIANGLE_RATIO = 0.75  # top-half / bottom-half mass; triangles sit well below 1
SQUARE_FILL = 0.88

_NAMES = list(PALETTE)
_RGB = np.array([PALETTE[n] for n in _NAMES], dtype=np.float32)


@dataclass(frozen=True)
class Detection:
    shape: str
    color: str
    size: str
    centroid: tuple[float, float]  # (x, y)
    area: int


def quantize(image: np.ndarray) -> np.ndarray:
    """Index into the palette of the nearest colour for every pixel."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.round((np.clip(img, -1.0, 1.0) + 1.0) * 127.5)
    px = img.reshape(-1, 3).astype(np.float32)
    d = ((px[:, None, :] - _RGB[None]) ** 2).sum(-1)
    return d.argmin(axis=1).reshape(img.shape[:2])


def classify_shape(component: np.ndarray) -> str:
    ys, xs = np.nonzero(component)
    box = component[ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    h = box.shape[0] // 2
    top, bottom = box[:h].sum(), box[box.shape[0] - h:].sum()
    if h and bottom and top / bottom < TRIANGLE_RATIO:
        return "triangle"
    return "square" if box.mean() >= SQUARE_FILL else "circle"


def detect_objects(image: np.ndarray) -> tuple[list[Detection], str]:
    """Detected objects and the background colour name."""
    labels = quantize(image)
    counts = np.bincount(labels.ravel(), minlength=len(_NAMES))
    background = _NAMES[int(counts.argmax())]
    found = []
    for color in COLORS:
        if color == background:
            continue
        comp, n = ndimage.label(labels == _NAMES.index(color))
        for idx in range(1, n + 1):
            m = comp == idx
            area = int(m.sum())
            if area < MIN_COMPONENT:
                continue
            ys, xs = np.nonzero(m)
            extent = max(ys.max() - ys.min(), xs.max() - xs.min()) + 1
            found.append(Detection(classify_shape(m), color, "large" if extent >= LARGE_EXTENT else "small",
                                   (float(xs.mean()), float(ys.mean())), area))
    return found, background
