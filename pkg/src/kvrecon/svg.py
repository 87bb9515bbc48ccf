"""Minimal SVG writers: boundary overlays and log-scale history charts."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd")


def _header(width: int, height: int) -> list[str]:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>']


def _points(xy) -> str:
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in xy)


def boundary_overlay(path, curves: dict[str, np.ndarray], size: int = 480, extent: float = 1.05) -> None:
    """Closed curves in the square ``[-extent, extent]^2``, one colour per entry."""
    scale = size / (2 * extent)

    def to_px(p):
        p = np.asarray(p, float)
        return np.column_stack([(p[:, 0] + extent) * scale, (extent - p[:, 1]) * scale])

    out = _header(size, size + 24 * len(curves))
    for i, (label, poly) in enumerate(curves.items()):
        colour = PALETTE[i % len(PALETTE)]
        closed = np.vstack([poly, poly[:1]])
        out.append(f'<polyline points="{_points(to_px(closed))}" fill="none" '
                   f'stroke="{colour}" stroke-width="1.5"/>')
        y = size + 18 + 24 * i
        out.append(f'<line x1="12" y1="{y - 4}" x2="36" y2="{y - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="44" y="{y}" font-family="sans-serif" font-size="13">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def history_chart(path, series: dict[str, Sequence[float]], width: int = 640, height: int = 400) -> None:
    """Log-scale line chart of positive series against iteration index."""
    left, right, top, bottom = 60, 20, 20, 40 + 18 * len(series)
    pw, ph = width - left - right, height - top - bottom
    finite = [np.asarray(v, float) for v in series.values()]
    vals = np.concatenate([v[np.isfinite(v) & (v > 0)] for v in finite] or [np.ones(1)])
    if vals.size == 0:
        vals = np.ones(1)
    lo = math.floor(math.log10(vals.min()))
    hi = max(math.ceil(math.log10(vals.max())), lo + 1)
    n_iter = max(max((len(v) for v in finite), default=1) - 1, 1)

    def to_px(i, v):
        return left + pw * i / n_iter, top + ph * (hi - math.log10(v)) / (hi - lo)

    out = _header(width, height)
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    for e in range(lo, hi + 1):
        _, y = to_px(0, 10.0 ** e)
        out.append(f'<line x1="{left}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{top + ph + 16}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12">iteration (0 to {n_iter})</text>')
    for i, (label, v) in enumerate(series.items()):
        colour = PALETTE[i % len(PALETTE)]
        v = np.asarray(v, float)
        ok = np.flatnonzero(np.isfinite(v) & (v > 0))
        if ok.size:
            pts = [to_px(j, v[j]) for j in ok]
            out.append(f'<polyline points="{_points(pts)}" fill="none" stroke="{colour}" stroke-width="1.5"/>')
        y = top + ph + 36 + 18 * i
        out.append(f'<line x1="{left}" y1="{y - 4}" x2="{left + 24}" y2="{y - 4}" stroke="{colour}" stroke-width="2"/>')
        out.append(f'<text x="{left + 32}" y="{y}" font-family="sans-serif" font-size="12">{label}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
