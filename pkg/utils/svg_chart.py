"""Minimal SVG line charts: axes, one polyline per series, labels."""
import math
from typing import List, NamedTuple, Sequence
from xml.sax.saxutils import escape

import numpy as np

from utils.errors import UsageError

WIDTH, HEIGHT = 640, 400
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 80, 20, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


class Series(NamedTuple):
    label: str
    x: Sequence[float]
    y: Sequence[float]


def _span(values: np.ndarray):
    low, high = float(np.min(values)), float(np.max(values))
    if high == low:
        pad = abs(low) * 0.05 or 1.0
        return low - pad, high + pad
    return low, high


def line_chart(series: List[Series], title: str = "", x_label: str = "iteration", y_label: str = "loss") -> str:
    if not 1 <= len(series) <= len(COLORS):
        raise UsageError(f"line_chart draws 1 to {len(COLORS)} series, got {len(series)}", "invalid_chart")
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s.y, dtype=float) for s in series])
    finite = np.isfinite(ys)
    if xs.size == 0 or not finite.any():
        raise UsageError("line_chart needs at least one finite point", "invalid_chart")
    x0, x1 = _span(xs)
    y0, y1 = _span(ys[finite])

    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def px(x: float) -> float:
        return MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w

    def py(y: float) -> float:
        return MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP + plot_h}" x2="{MARGIN_LEFT + plot_w}" '
        f'y2="{MARGIN_TOP + plot_h}" stroke="black"/>',
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" y2="{MARGIN_TOP + plot_h}" stroke="black"/>',
    ]
    for fraction in (0.0, 0.5, 1.0):
        xv = x0 + fraction * (x1 - x0)
        yv = y0 + fraction * (y1 - y0)
        parts.append(f'<text x="{px(xv):.1f}" y="{MARGIN_TOP + plot_h + 16}" text-anchor="middle">{xv:.6g}</text>')
        parts.append(f'<text x="{MARGIN_LEFT - 6}" y="{py(yv) + 4:.1f}" text-anchor="end">{yv:.6g}</text>')
    parts.append(f'<text x="{MARGIN_LEFT + plot_w / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(x_label)}</text>')
    parts.append(f'<text x="16" y="{MARGIN_TOP + plot_h / 2}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {MARGIN_TOP + plot_h / 2})">{escape(y_label)}</text>')

    for n, s in enumerate(series):
        color = COLORS[n]
        points = " ".join(
            f"{px(float(x)):.2f},{py(float(y)):.2f}"
            for x, y in zip(s.x, s.y) if math.isfinite(float(y))
        )
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        legend_y = MARGIN_TOP + 14 * (n + 1)
        parts.append(f'<line x1="{WIDTH - 180}" y1="{legend_y - 4}" x2="{WIDTH - 160}" y2="{legend_y - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - 154}" y="{legend_y}">{escape(s.label)}</text>')

    parts.append("</svg>")
    return "\n".join(parts) + "\n"
