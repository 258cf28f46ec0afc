"""Minimal deterministic SVG line plots.

Plots here are verification aids for the CLI outputs, not a UI, so the
writer is a pure function of its inputs: fixed palette, fixed geometry,
no timestamps, no external resources. Byte-identical inputs give
byte-identical files.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

_MARGIN = {"left": 74.0, "right": 18.0, "top": 40.0, "bottom": 54.0}


def _tick_values(lo: float, hi: float, target: int = 5) -> list[float]:
    """Round tick positions covering [lo, hi] on a 1-2-2.5-5 ladder."""
    span = hi - lo
    raw = span / max(target, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = 10.0 * mag
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if span / (mult * mag) <= target + 0.5:
            step = mult * mag
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-9 * span else t)
        t += step
    return ticks


def _fmt_tick(v: float) -> str:
    s = f"{v:.6g}"
    return "0" if s == "-0" else s


def line_plot(
    series,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    width: float = 760.0,
    height: float = 500.0,
) -> str:
    """Render [(label, xs, ys), ...] as a standalone SVG document string."""
    if not series:
        raise ValueError("need at least one series")
    xs_all = [float(x) for _, xs, _ in series for x in xs]
    ys_all = [float(y) for _, _, ys in series for y in ys]
    if not xs_all:
        raise ValueError("series contain no points")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi - x_lo <= 0.0:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi - y_lo <= 0.0:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad = 0.04 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    x0, x1 = _MARGIN["left"], width - _MARGIN["right"]
    y0, y1 = height - _MARGIN["bottom"], _MARGIN["top"]

    def px(x: float) -> float:
        return x0 + (x - x_lo) / (x_hi - x_lo) * (x1 - x0)

    def py(y: float) -> float:
        return y0 + (y - y_lo) / (y_hi - y_lo) * (y1 - y0)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" '
        f'height="{height:g}" viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="#ffffff"/>',
        '<g font-family="Helvetica,Arial,sans-serif" font-size="13" fill="#202020">',
    ]
    if title:
        out.append(
            f'<text x="{(x0 + x1) / 2:.2f}" y="22" text-anchor="middle" '
            f'font-size="15">{escape(title)}</text>'
        )

    for tx in _tick_values(x_lo, x_hi):
        gx = px(tx)
        out.append(
            f'<line x1="{gx:.2f}" y1="{y0:.2f}" x2="{gx:.2f}" y2="{y1:.2f}" '
            'stroke="#e0e0e0" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{gx:.2f}" y="{y0 + 18:.2f}" text-anchor="middle">'
            f"{_fmt_tick(tx)}</text>"
        )
    for ty in _tick_values(y_lo, y_hi):
        gy = py(ty)
        out.append(
            f'<line x1="{x0:.2f}" y1="{gy:.2f}" x2="{x1:.2f}" y2="{gy:.2f}" '
            'stroke="#e0e0e0" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{x0 - 8:.2f}" y="{gy + 4:.2f}" text-anchor="end">'
            f"{_fmt_tick(ty)}</text>"
        )

    out.append(
        f'<rect x="{x0:.2f}" y="{y1:.2f}" width="{x1 - x0:.2f}" '
        f'height="{y0 - y1:.2f}" fill="none" stroke="#202020" stroke-width="1"/>'
    )

    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            'stroke-width="1.6"/>'
        )

    ly = y1 + 14.0
    for i, (label, _, _) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        row = ly + 17.0 * i
        out.append(
            f'<line x1="{x1 - 150:.2f}" y1="{row:.2f}" x2="{x1 - 124:.2f}" '
            f'y2="{row:.2f}" stroke="{color}" stroke-width="2.4"/>'
        )
        out.append(f'<text x="{x1 - 118:.2f}" y="{row + 4:.2f}">{escape(str(label))}</text>')

    if xlabel:
        out.append(
            f'<text x="{(x0 + x1) / 2:.2f}" y="{height - 14:.2f}" '
            f'text-anchor="middle">{escape(xlabel)}</text>'
        )
    if ylabel:
        out.append(
            f'<text x="20" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
            f'transform="rotate(-90 20 {(y0 + y1) / 2:.2f})">{escape(ylabel)}</text>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
