"""Bare-bones SVG line/scatter plots (axes, markers, polylines)."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 420
ML, MR, MT, MB = 70, 70, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(vals, dtype=float) - lo) / span * (out_hi - out_lo)


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def _axis_range(ys):
    ys = np.concatenate([np.ravel(np.asarray(y, dtype=float)) for y in ys]) if ys else np.array([])
    ys = ys[np.isfinite(ys)]
    if ys.size == 0:
        return 0.0, 1.0
    lo, hi = float(ys.min()), float(ys.max())
    if hi == lo:
        hi = lo + 1.0
    return min(lo, 0.0), hi * 1.05


def plot(x, left, right=None, xlabel="", left_label="", right_label="", title="",
         markers=None, vlines=()):
    """Return SVG text. ``left``/``right`` map legend labels to y arrays;
    ``markers`` maps labels to (x, y) point arrays drawn on the left axis."""
    x = np.asarray(x, dtype=float)
    x0, x1 = float(np.min(x)), float(np.max(x))
    if x1 == x0:
        x1 = x0 + 1.0
    px = lambda v: _scale(v, x0, x1, ML, W - MR)
    ly0, ly1 = _axis_range(list(left.values()) + [m[1] for m in (markers or {}).values()])
    py = lambda v: _scale(v, ly0, ly1, H - MB, MT)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
           f'<line x1="{ML}" y1="{H - MB}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>',
           f'<line x1="{ML}" y1="{MT}" x2="{ML}" y2="{H - MB}" stroke="black"/>']
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{H - MB + 15}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(ly0, ly1):
        out.append(f'<text x="{ML - 5}" y="{py(t):.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{H / 2}" transform="rotate(-90 15 {H / 2})" '
               f'text-anchor="middle">{escape(left_label)}</text>')
    color = iter(COLORS * 4)
    legend = []

    def poly(ys, yfun, c):
        ok = np.isfinite(ys)
        pts = " ".join(f"{a:.1f},{b:.1f}" for a, b in zip(px(x[ok]), yfun(np.asarray(ys)[ok])))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')

    for label, ys in left.items():
        c = next(color)
        poly(np.asarray(ys, dtype=float), py, c)
        legend.append((label, c))
    for label, (mx, my) in (markers or {}).items():
        c = next(color)
        for a, b in zip(px(mx), py(my)):
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="3" fill="{c}"/>')
        legend.append((label, c))
    if right:
        ry0, ry1 = _axis_range(list(right.values()))
        pry = lambda v: _scale(v, ry0, ry1, H - MB, MT)
        out.append(f'<line x1="{W - MR}" y1="{MT}" x2="{W - MR}" y2="{H - MB}" stroke="black"/>')
        for t in _ticks(ry0, ry1):
            out.append(f'<text x="{W - MR + 5}" y="{pry(t):.1f}">{t:.3g}</text>')
        out.append(f'<text x="{W - 12}" y="{H / 2}" transform="rotate(90 {W - 12} {H / 2})" '
                   f'text-anchor="middle">{escape(right_label)}</text>')
        for label, ys in right.items():
            c = next(color)
            poly(np.asarray(ys, dtype=float), pry, c)
            legend.append((label, c))
    for v in vlines:
        out.append(f'<line x1="{px(v):.1f}" y1="{MT}" x2="{px(v):.1f}" y2="{H - MB}" '
                   f'stroke="gray" stroke-dasharray="4 3"/>')
    for i, (label, c) in enumerate(legend):
        y = MT + 12 + 14 * i
        out.append(f'<rect x="{ML + 10}" y="{y - 8}" width="10" height="3" fill="{c}"/>')
        out.append(f'<text x="{ML + 25}" y="{y - 4}">{escape(label)}</text>')
    out.append("</svg>\n")
    return "\n".join(out)
