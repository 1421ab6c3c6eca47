"""Dependency-free SVG plots derived from the CSV results."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _svg(width, height, body):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">\n'
            + "\n".join(body) + "\n</svg>\n")


def radar_svg(series: list[tuple[str, dict]], size: int = 360) -> str:
    """One polygon per series over the skill axes; absent skills are drawn at the centre."""
    axes = list(series[0][1]) if series else []
    cx = cy = size / 2
    radius = size / 2 - 60
    body = []
    n = max(len(axes), 1)

    def point(i, r):
        ang = -math.pi / 2 + 2 * math.pi * i / n
        return cx + r * math.cos(ang), cy + r * math.sin(ang)

    for level in (0.25, 0.5, 0.75, 1.0):
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in (point(i, radius * level) for i in range(n)))
        body.append(f'<polygon points="{pts}" fill="none" stroke="#ccc"/>')
    for i, name in enumerate(axes):
        x, y = point(i, radius)
        lx, ly = point(i, radius + 22)
        body.append(f'<line x1="{cx:.1f}" y1="{cy:.1f}" x2="{x:.1f}" y2="{y:.1f}" stroke="#ccc"/>')
        body.append(f'<text x="{lx:.1f}" y="{ly:.1f}" text-anchor="middle">{escape(name)}</text>')
    for k, (label, values) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{x:.1f},{y:.1f}" for x, y in
                       (point(i, radius * (values.get(a) or 0.0)) for i, a in enumerate(axes)))
        body.append(f'<polygon class="series" points="{pts}" fill="{color}" fill-opacity="0.15" stroke="{color}"/>')
        body.append(f'<text x="10" y="{16 + 14 * k}" fill="{color}">{escape(label)}</text>')
    return _svg(size, size, body)


def line_svg(xs: list[float], series: dict[str, list[float | None]], xlabel: str = "", ylabel: str = "",
             width: int = 480, height: int = 320) -> str:
    left, right, top, bottom = 50, 20, 20, 40
    pw, ph = width - left - right, height - top - bottom
    vals = [v for ys in series.values() for v in ys if v is not None]
    lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
    if hi - lo < 1e-9:
        lo, hi = lo - 0.5, hi + 0.5
    x0, x1 = min(xs), max(xs)
    span = (x1 - x0) or 1.0

    def px(x):
        return left + pw * (x - x0) / span

    def py(y):
        return top + ph * (1 - (y - lo) / (hi - lo))

    body = [f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#999"/>']
    for x in xs:
        body.append(f'<text x="{px(x):.1f}" y="{height - bottom + 14}" text-anchor="middle">{x:g}</text>')
    for y in (lo, (lo + hi) / 2, hi):
        body.append(f'<text x="{left - 4}" y="{py(y) + 4:.1f}" text-anchor="end">{y:.3f}</text>')
    body.append(f'<text x="{left + pw / 2}" y="{height - 6}" text-anchor="middle">{escape(xlabel)}</text>')
    body.append(f'<text x="12" y="{top + ph / 2}" transform="rotate(-90 12 {top + ph / 2})" '
                f'text-anchor="middle">{escape(ylabel)}</text>')
    for k, (label, ys) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in zip(xs, ys) if y is not None)
        body.append(f'<polyline class="series" points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        body.append(f'<text x="{left + 6}" y="{top + 14 + 13 * k}" fill="{color}">{escape(label)}</text>')
    return _svg(width, height, body)


def contact_sheet_svg(maps: list[tuple[str, "list[list[float]]"]], cell: int = 3, columns: int = 5) -> str:
    """Grayscale maps laid out in a grid, one rect per pixel."""
    if not maps:
        return _svg(10, 10, [])
    h = len(maps[0][1])
    w = len(maps[0][1][0])
    pad = 18
    cw, ch = w * cell + 10, h * cell + pad
    rows = math.ceil(len(maps) / columns)
    body = []
    for k, (label, grid) in enumerate(maps):
        ox, oy = (k % columns) * cw, (k // columns) * ch
        body.append(f'<text x="{ox}" y="{oy + 12}">{escape(label)}</text>')
        for y, row in enumerate(grid):
            for x, v in enumerate(row):
                g = int(round(max(0.0, min(1.0, v)) * 255))
                body.append(f'<rect x="{ox + x * cell}" y="{oy + pad - 4 + y * cell}" width="{cell}" '
                            f'height="{cell}" fill="rgb({g},{g},{g})"/>')
    return _svg(min(len(maps), columns) * cw, rows * ch, body)
