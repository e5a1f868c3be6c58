"""Dependency-free static SVG plots (line charts and scatter plots)."""

from __future__ import annotations

import math
from typing import List, Sequence, Tuple
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")

W, H = 720, 480
LEFT, RIGHT, TOP, BOTTOM = 70, 200, 40, 55


def _ticks(lo: float, hi: float, count: int = 5) -> List[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + 1e-12 * step:
        out.append(round(v, 12))
        v += step
    return out


def _bounds(values: Sequence[float]) -> Tuple[float, float]:
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return 0.0, 1.0
    lo, hi = min(finite), max(finite)
    if lo == hi:
        pad = abs(lo) * 0.1 or 1.0
        return lo - pad, hi + pad
    return lo, hi


def _frame(title, xlabel, ylabel, xr, yr, fmt_y=None) -> List[str]:
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{LEFT + pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    sx, sy = _scales(xr, yr)
    for t in _ticks(*xr):
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{t:g}</text>')
    for t in _ticks(*yr):
        y = sy(t)
        label = fmt_y(t) if fmt_y else f"{t:g}"
        out.append(f'<line x1="{LEFT - 5}" y1="{y:.2f}" x2="{LEFT}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{escape(label)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    return out


def _scales(xr, yr):
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM
    return (lambda v: LEFT + (v - xr[0]) / (xr[1] - xr[0]) * pw,
            lambda v: TOP + ph - (v - yr[0]) / (yr[1] - yr[0]) * ph)


def _legend(labels: Sequence[str]) -> List[str]:
    out = []
    x0 = W - RIGHT + 12
    for i, label in enumerate(labels):
        y = TOP + 10 + 18 * i
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<line x1="{x0}" y1="{y}" x2="{x0 + 20}" y2="{y}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{x0 + 26}" y="{y + 4}" font-size="10">{escape(label)}</text>')
    return out


def line_plot(series: Sequence[Tuple[str, Sequence[float], Sequence[float]]], title: str,
              xlabel: str, ylabel: str, log_y: bool = False) -> str:
    """One polyline per ``(label, xs, ys)``; non-finite points break the line."""
    prepared = []
    for label, xs, ys in series:
        if log_y:
            ys = [math.log10(v) if v > 0 and math.isfinite(v) else math.nan for v in ys]
        prepared.append((label, list(xs), list(ys)))
    xr = _bounds([v for _, xs, _ in prepared for v in xs])
    yr = _bounds([v for _, _, ys in prepared for v in ys])
    fmt_y = (lambda t: f"1e{t:g}") if log_y else None
    out = _frame(title, xlabel, ylabel, xr, yr, fmt_y)
    sx, sy = _scales(xr, yr)
    for i, (label, xs, ys) in enumerate(prepared):
        c = PALETTE[i % len(PALETTE)]
        segment: List[str] = []
        segments = [segment]
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                segment.append(f"{sx(x):.2f},{sy(y):.2f}")
            elif segment:
                segment = []
                segments.append(segment)
        for seg in segments:
            if seg:
                out.append(f'<polyline class="series" data-label="{escape(label)}" fill="none" '
                           f'stroke="{c}" stroke-width="1.5" points="{" ".join(seg)}"/>')
    out += _legend([label for label, _, _ in prepared])
    out.append("</svg>")
    return "\n".join(out) + "\n"


def scatter_plot(groups: Sequence[Tuple[str, Sequence[Tuple[float, float]]]], title: str,
                 xlabel: str = "x", ylabel: str = "y", markers: Sequence[Tuple[float, float]] = ()) -> str:
    pts = [p for _, g in groups for p in g] + list(markers)
    xr = _bounds([p[0] for p in pts])
    yr = _bounds([p[1] for p in pts])
    out = _frame(title, xlabel, ylabel, xr, yr)
    sx, sy = _scales(xr, yr)
    for i, (label, g) in enumerate(groups):
        c = PALETTE[i % len(PALETTE)]
        out.append(f'<g class="series" data-label="{escape(label)}" fill="{c}" fill-opacity="0.4">')
        for x, y in g:
            if math.isfinite(x) and math.isfinite(y):
                out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.5"/>')
        out.append("</g>")
    for x, y in markers:
        out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="5" fill="none" stroke="black"/>')
    out += _legend([label for label, _ in groups])
    out.append("</svg>")
    return "\n".join(out) + "\n"
