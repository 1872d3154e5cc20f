"""Minimal SVG line charts with optional shaded bands."""

from __future__ import annotations

from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False


@dataclass
class Band:
    x: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    color_of: int = 0  # index of the series whose colour the band shares


@dataclass
class Chart:
    title: str
    xlabel: str
    ylabel: str
    series: list[Series] = field(default_factory=list)
    bands: list[Band] = field(default_factory=list)
    width: int = 640
    height: int = 420


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    return np.arange(np.ceil(lo / step) * step, hi + 1e-9 * step, step)


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def render(chart: Chart) -> str:
    ml, mr, mt, mb = 70, 150, 40, 50
    w, h = chart.width, chart.height
    pw, ph = w - ml - mr, h - mt - mb
    xs = [s.x for s in chart.series] + [b.x for b in chart.bands]
    ys = [s.y for s in chart.series] + [b.lower for b in chart.bands] + [b.upper for b in chart.bands]
    xs = np.concatenate([np.asarray(a, float) for a in xs]) if xs else np.array([0.0, 1.0])
    ys = np.concatenate([np.asarray(a, float) for a in ys]) if ys else np.array([0.0, 1.0])
    xs, ys = xs[np.isfinite(xs)], ys[np.isfinite(ys)]
    x0, x1 = (float(xs.min()), float(xs.max())) if xs.size else (0.0, 1.0)
    y0, y1 = (min(0.0, float(ys.min())), float(ys.max())) if ys.size else (0.0, 1.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(x):
        return ml + (np.asarray(x, float) - x0) / (x1 - x0) * pw

    def py(y):
        return mt + ph - (np.asarray(y, float) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{ml + pw / 2}" y="{mt / 2 + 5}" text-anchor="middle" font-size="15">{escape(chart.title)}</text>',
    ]
    for t in _ticks(x0, x1):
        X = px(t)
        out.append(f'<line x1="{X:.2f}" y1="{mt + ph}" x2="{X:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{X:.2f}" y="{mt + ph + 18}" text-anchor="middle" font-size="11">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        Y = py(t)
        out.append(f'<line x1="{ml - 5}" y1="{Y:.2f}" x2="{ml}" y2="{Y:.2f}" stroke="black"/>')
        out.append(f'<line x1="{ml}" y1="{Y:.2f}" x2="{ml + pw}" y2="{Y:.2f}" stroke="#eeeeee"/>')
        out.append(f'<text x="{ml - 8}" y="{Y + 4:.2f}" text-anchor="end" font-size="11">{_fmt(t)}</text>')
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    out.append(f'<text x="{ml + pw / 2}" y="{h - 10}" text-anchor="middle" font-size="13">{escape(chart.xlabel)}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 16 {mt + ph / 2})">{escape(chart.ylabel)}</text>')
    for b in chart.bands:
        color = PALETTE[b.color_of % len(PALETTE)]
        upper = " ".join(f"{a:.2f},{c:.2f}" for a, c in zip(px(b.x), py(b.upper)))
        lower = " ".join(f"{a:.2f},{c:.2f}" for a, c in zip(px(b.x)[::-1], py(b.lower)[::-1]))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
    for k, s in enumerate(chart.series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{a:.2f},{c:.2f}" for a, c in zip(px(s.x), py(s.y)) if np.isfinite(c))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>')
        ly = mt + 16 + 18 * k
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 34}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"{dash}/>')
        out.append(f'<text x="{ml + pw + 40}" y="{ly + 4}" font-size="11">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
