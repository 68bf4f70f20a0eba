"""Minimal static SVG line plots, no plotting library involved."""

from __future__ import annotations

import math
from html import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = (70, 20, 30, 50)  # left, right, top, bottom
COLOURS = ("#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, log: bool) -> list:
    if log:
        first, last = math.floor(lo), math.ceil(hi)
        step = max(1, (last - first) // 6)
        return [float(k) for k in range(first, last + 1, step) if lo - 1e-9 <= k <= hi + 1e-9]
    span = hi - lo
    raw = span / 5 if span > 0 else 1.0
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def _label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.3g}"


def line_plot(series, title: str = "", xlabel: str = "", ylabel: str = "",
              logx: bool = False, logy: bool = False) -> str:
    """series: list of (label, x, y). Non-finite points (and non-positive on log axes) are dropped."""
    cleaned = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logx:
            y = np.where(x > 0, y, np.nan)
            x = np.log10(np.where(x > 0, x, np.nan))
        if logy:
            y = np.log10(np.where(y > 0, y, np.nan))
        ok = np.isfinite(x) & np.isfinite(y)
        cleaned.append((label, x[ok], y[ok]))
    xs = np.concatenate([c[1] for c in cleaned]) if cleaned else np.zeros(0)
    ys = np.concatenate([c[2] for c in cleaned]) if cleaned else np.zeros(0)
    if xs.size == 0:
        xs, ys = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = MARGIN
    pw, ph = WIDTH - left - right, HEIGHT - top - bottom

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + (1.0 - (v - y0) / (y1 - y0)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in _ticks(x0, x1, logx):
        out.append(f'<line x1="{_fmt(px(v))}" y1="{top + ph}" x2="{_fmt(px(v))}" y2="{top + ph + 4}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{_fmt(px(v))}" y="{top + ph + 16}" text-anchor="middle">'
                   f'{_label(v, logx)}</text>')
    for v in _ticks(y0, y1, logy):
        out.append(f'<line x1="{left - 4}" y1="{_fmt(py(v))}" x2="{left}" y2="{_fmt(py(v))}" stroke="black"/>')
        out.append(f'<text x="{left - 6}" y="{_fmt(py(v) + 4)}" text-anchor="end">{_label(v, logy)}</text>')
    for k, (label, x, y) in enumerate(cleaned):
        colour = COLOURS[k % len(COLOURS)]
        if x.size:
            pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{left + pw - 6}" y="{top + 14 + 14 * k}" text-anchor="end" '
                   f'fill="{colour}">{escape(label)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{top - 10}" text-anchor="middle">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2}" y="{HEIGHT - 8}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
