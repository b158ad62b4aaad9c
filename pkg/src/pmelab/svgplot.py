"""Minimal log-linear SVG line chart, enough to eyeball a decay rate."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def log_linear_svg(
    x,
    series: dict[str, list[float]],
    *,
    title: str = "",
    xlabel: str = "t",
    ylabel: str = "distance",
    width: int = 640,
    height: int = 400,
) -> str:
    """Render series on a linear x axis and a log10 y axis.

    Nonpositive values are dropped since they have no place on a log scale.
    Output is deterministic for identical input.
    """
    x = [float(v) for v in x]
    pad_l, pad_r, pad_t, pad_b = 70, 20, 30, 50
    pos = [v for ys in series.values() for v in ys if v > 0 and math.isfinite(v)]
    lo = math.floor(math.log10(min(pos))) if pos else -1
    hi = math.ceil(math.log10(max(pos))) if pos else 0
    if hi == lo:
        hi += 1
    x0, x1 = (min(x), max(x)) if x else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return pad_t + (hi - math.log10(v)) / (hi - lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{pad_l}" y="{pad_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for e in range(lo, hi + 1):
        y = sy(10.0**e)
        out.append(f'<line x1="{pad_l}" y1="{y:.2f}" x2="{pad_l + pw}" y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{pad_l - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    for i in range(6):
        v = x0 + (x1 - x0) * i / 5
        out.append(f'<text x="{sx(v):.2f}" y="{pad_t + ph + 18}" text-anchor="middle">{v:.3g}</text>')
    out.append(f'<text x="{pad_l + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="16" y="{pad_t + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {pad_t + ph / 2})">'
        f"{escape(ylabel)}</text>"
    )
    if title:
        out.append(f'<text x="{pad_l + pw / 2}" y="{pad_t - 10}" text-anchor="middle">{escape(title)}</text>')
    for i, (name, ys) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = [f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, ys) if b > 0 and math.isfinite(b)]
        if pts:
            dash = ' stroke-dasharray="6 3"' if i % 2 else ""
            out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{" ".join(pts)}"/>')
        out.append(
            f'<text x="{pad_l + pw - 8}" y="{pad_t + 16 + 14 * i}" text-anchor="end" fill="{color}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
